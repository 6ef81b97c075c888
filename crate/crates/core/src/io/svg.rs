//! Minimal rect-grid SVG heatmaps.

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Palette {
    /// White to dark blue over `[0, 1]`.
    Sequential,
    /// Blue through white to red, symmetric around zero.
    Diverging,
}

fn lerp(a: (f64, f64, f64), b: (f64, f64, f64), t: f64) -> (u8, u8, u8) {
    let f = |x: f64, y: f64| (x + (y - x) * t).round().clamp(0.0, 255.0) as u8;
    (f(a.0, b.0), f(a.1, b.1), f(a.2, b.2))
}

fn colour(palette: Palette, v: f64, scale: f64) -> (u8, u8, u8) {
    const WHITE: (f64, f64, f64) = (255.0, 255.0, 255.0);
    const BLUE: (f64, f64, f64) = (33.0, 102.0, 172.0);
    const RED: (f64, f64, f64) = (178.0, 24.0, 43.0);
    match palette {
        Palette::Sequential => lerp(WHITE, (8.0, 48.0, 107.0), v.clamp(0.0, 1.0)),
        Palette::Diverging => {
            let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
            if t >= 0.0 {
                lerp(WHITE, RED, t)
            } else {
                lerp(WHITE, BLUE, -t)
            }
        }
    }
}

/// One square cell per entry, row 0 at the top, with 1-based axis labels.
pub fn heatmap(values: &Matrix, palette: Palette, title: &str) -> String {
    let (rows, cols) = values.shape();
    let cell = if rows.max(cols) > 30 { 12.0 } else { 20.0 };
    let margin = 40.0;
    let width = margin + cols as f64 * cell + 10.0;
    let height = margin + rows as f64 * cell + 10.0;
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"9\">\n"
    );
    out.push_str(&format!("<title>{}</title>\n", escape(title)));
    out.push_str(&format!("<text x=\"{margin}\" y=\"12\" font-size=\"11\">{}</text>\n", escape(title)));
    for r in 0..rows {
        for c in 0..cols {
            let (red, green, blue) = colour(palette, values[(r, c)], scale);
            out.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({red},{green},{blue})\"><title>({},{}) {:.4e}</title></rect>\n",
                margin + c as f64 * cell,
                margin + r as f64 * cell,
                r + 1,
                c + 1,
                values[(r, c)]
            ));
        }
    }
    let step = if rows.max(cols) > 20 { 5 } else { 1 };
    for k in (0..rows.max(cols)).filter(|k| (k + 1) % step == 0 || *k == 0) {
        let pos = margin + (k as f64 + 0.5) * cell;
        if k < cols {
            out.push_str(&format!("<text x=\"{pos}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", margin - 4.0, k + 1));
        }
        if k < rows {
            out.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", margin - 4.0, pos + 3.0, k + 1));
        }
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

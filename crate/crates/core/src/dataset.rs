//! Curve bundles observed on a shared grid.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `n` curves observed on a shared ascending grid of `r` points.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectraDataset {
    grid: Vec<f64>,
    curves: Matrix,
}

impl SpectraDataset {
    pub fn new(grid: Vec<f64>, curves: Matrix) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::Input(format!("grid needs at least 2 points, got {}", grid.len())));
        }
        if curves.nrows() == 0 {
            return Err(Error::Input("dataset has no curves".into()));
        }
        if curves.ncols() != grid.len() {
            return Err(Error::Input(format!(
                "curves have {} columns but the grid has {} points",
                curves.ncols(),
                grid.len()
            )));
        }
        if let Some(k) = grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Parse {
                row: 1,
                column: k + 2,
                message: "grid is not strictly ascending".into(),
            });
        }
        if let Some(idx) = curves.iter().position(|v| !v.is_finite()) {
            let (r, c) = (idx % curves.nrows(), idx / curves.nrows());
            return Err(Error::Parse {
                row: r + 2,
                column: c + 1,
                message: "missing or non-finite value".into(),
            });
        }
        Ok(SpectraDataset { grid, curves })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Rows are curves.
    pub fn curves(&self) -> &Matrix {
        &self.curves
    }

    pub fn n_curves(&self) -> usize {
        self.curves.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    /// Trapezoidal area under each curve.
    pub fn areas(&self) -> Vec<f64> {
        (0..self.n_curves())
            .map(|i| {
                self.grid
                    .windows(2)
                    .enumerate()
                    .map(|(l, w)| 0.5 * (w[1] - w[0]) * (self.curves[(i, l)] + self.curves[(i, l + 1)]))
                    .sum()
            })
            .collect()
    }

    /// Rescales every curve to unit trapezoidal area.
    pub fn normalize_area(&self) -> Result<SpectraDataset> {
        let mut curves = self.curves.clone();
        for (i, area) in self.areas().into_iter().enumerate() {
            if area.abs() < f64::MIN_POSITIVE || !area.is_finite() {
                return Err(Error::Input(format!("curve {} has zero area", i + 1)));
            }
            curves.row_mut(i).scale_mut(1.0 / area);
        }
        Ok(SpectraDataset {
            grid: self.grid.clone(),
            curves,
        })
    }

    /// Wide CSV: first row is the grid, every following row a curve.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        push_row(&mut out, self.grid.iter().copied());
        for i in 0..self.n_curves() {
            push_row(&mut out, self.curves.row(i).iter().copied());
        }
        out
    }
}

fn push_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let cells: Vec<String> = values.map(fmt_f64).collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

/// Round-trip float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub normalize_area: bool,
    /// Keep only rows whose label column equals `value`. The label column is
    /// named by its header cell and dropped from the grid.
    pub label_filter: Option<(String, String)>,
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        column,
        message: format!("non-numeric cell {:?}", cell),
    })
}

/// Parses wide-format CSV spectra. Rows and columns in errors are 1-based.
pub fn parse_spectra<R: Read>(reader: R, options: &LoadOptions) -> Result<SpectraDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(rec) => rec.map_err(|e| Error::Parse {
            row: 1,
            column: 1,
            message: e.to_string(),
        })?,
        None => return Err(Error::Input("empty file".into())),
    };
    let label_col = match &options.label_filter {
        Some((name, _)) => Some(header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Input(format!("label column {name:?} not found in the header"))
        })?),
        None => None,
    };
    let mut grid = Vec::with_capacity(header.len());
    for (c, cell) in header.iter().enumerate() {
        if Some(c) != label_col {
            grid.push(parse_cell(cell, 1, c + 1)?);
        }
    }
    let mut values = Vec::new();
    let mut n = 0;
    for (k, rec) in rows.enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 1,
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} cells, found {}", header.len(), rec.len()),
            });
        }
        if let (Some(lc), Some((_, wanted))) = (label_col, &options.label_filter) {
            if &rec[lc] != wanted {
                continue;
            }
        }
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) != label_col {
                values.push(parse_cell(cell, row, c + 1)?);
            }
        }
        n += 1;
    }
    let curves = Matrix::from_row_slice(n, grid.len(), &values);
    let ds = SpectraDataset::new(grid, curves)?;
    if options.normalize_area {
        ds.normalize_area()
    } else {
        Ok(ds)
    }
}

pub fn load_spectra(path: &Path, options: &LoadOptions) -> Result<SpectraDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_spectra(std::io::BufReader::new(file), options)
}

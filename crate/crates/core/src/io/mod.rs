//! On-disk formats: chain traces, fit artifacts and replicate reports.
//!
//! Floats are written with 17 significant digits so that every file
//! round-trips bit-exactly.

pub mod svg;

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::bspline::{BasisSpec, DesignMatrix};
use crate::dataset::{fmt_f64, SpectraDataset};
use crate::error::{Error, Result};
use crate::gibbs::{StoredOmega, WeightedChain};
use crate::graph::{all_pairs, Edge, Graph};
use crate::linalg::{Matrix, Vector};
use crate::posterior::{self, PosteriorSummary};
use crate::simulation::ReplicateReport;

const OMEGA_MAGIC: &[u8; 8] = b"SGOMEGA1";

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("JSON encoding: {e}")))?;
    write_file(path, text + "\n")
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (r, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<&str> = line.split(',').collect();
        if *ncols.get_or_insert(row.len()) != row.len() {
            return Err(Error::Parse {
                row: r + 1,
                column: row.len() + 1,
                message: "ragged matrix row".into(),
            });
        }
        for (c, cell) in row.iter().enumerate() {
            values.push(cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                row: r + 1,
                column: c + 1,
                message: format!("non-numeric cell {cell:?}"),
            })?);
        }
        nrows += 1;
    }
    Ok(Matrix::from_row_slice(nrows, ncols.unwrap_or(0), &values))
}

fn parse_err(file: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: 1,
        message: format!("{file}: {}", message.into()),
    }
}

/// Writes `tau2.csv`, `edges.csv`, `edge_log.csv`, `beta_mean.csv`,
/// `mu_mean.csv` and, when `with_omega`, the binary `omega.bin`.
///
/// `edge_log.csv` lists the edge flips (`+` or `-`) that turn the graph of
/// the previous row into the graph recorded at each iteration, starting
/// from the empty graph.
pub fn write_chain(dir: &Path, chain: &WeightedChain, with_omega: bool) -> Result<()> {
    create_dir(dir)?;
    let mut tau = String::from("iteration,tau2,log_post\n");
    let mut edges = String::from("iteration,weight,edge_hash\n");
    let mut log = String::from("iteration,change,j,k\n");
    let mut previous = Graph::empty(chain.n_nodes);
    for (t, it) in chain.iterations.iter().enumerate() {
        tau.push_str(&format!("{it},{},{}\n", fmt_f64(chain.tau2[t]), fmt_f64(chain.log_post[t])));
        let g = &chain.graphs[t];
        edges.push_str(&format!("{it},{},{:016x}\n", fmt_f64(chain.weights[t]), g.edge_hash()));
        for e in all_pairs(chain.n_nodes) {
            match (previous.contains(e), g.contains(e)) {
                (false, true) => log.push_str(&format!("{it},+,{},{}\n", e.lo() + 1, e.hi() + 1)),
                (true, false) => log.push_str(&format!("{it},-,{},{}\n", e.lo() + 1, e.hi() + 1)),
                _ => {}
            }
        }
        previous = g.clone();
    }
    write_file(&dir.join("tau2.csv"), tau)?;
    write_file(&dir.join("edges.csv"), edges)?;
    write_file(&dir.join("edge_log.csv"), log)?;
    write_file(&dir.join("beta_mean.csv"), matrix_to_csv(&chain.beta_mean))?;
    write_file(&dir.join("mu_mean.csv"), matrix_to_csv(&Matrix::from_column_slice(1, chain.mu_mean.len(), chain.mu_mean.as_slice())))?;
    if with_omega {
        write_omega_bin(&dir.join("omega.bin"), chain.n_nodes, &chain.omegas)?;
    }
    Ok(())
}

fn write_omega_bin(path: &Path, p: usize, omegas: &[StoredOmega]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(OMEGA_MAGIC)?;
    put(&(p as u64).to_le_bytes())?;
    put(&(omegas.len() as u64).to_le_bytes())?;
    for o in omegas {
        put(&(o.iteration as u64).to_le_bytes())?;
        put(&o.weight.to_le_bytes())?;
        for v in o.values.iter() {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_omega_bin(path: &Path, p: usize) -> Result<Vec<StoredOmega>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = |m: &str| Error::Input(format!("{}: {m}", path.display()));
    if bytes.len() < 24 || &bytes[..8] != OMEGA_MAGIC {
        return Err(corrupt("not a precision-matrix log"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    if word(8) as usize != p {
        return Err(corrupt("dimension does not match the chain"));
    }
    let count = word(16) as usize;
    let record = 16 + 8 * p * p;
    if bytes.len() != 24 + count * record {
        return Err(corrupt("truncated file"));
    }
    Ok((0..count)
        .map(|k| {
            let base = 24 + k * record;
            let values = Matrix::from_iterator(p, p, (0..p * p).map(|i| f64::from_bits(word(base + 16 + 8 * i))));
            StoredOmega {
                iteration: word(base) as usize,
                weight: f64::from_bits(word(base + 8)),
                values,
            }
        })
        .collect())
}

fn csv_rows<'a>(text: &'a str, file: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        _ => return Err(parse_err(file, 1, format!("expected header {header:?}"))),
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| (k + 2, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(row: &[&str], idx: usize, file: &str, line: usize) -> Result<T> {
    row.get(idx)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse {
            row: line,
            column: idx + 1,
            message: format!("{file}: malformed value"),
        })
}

/// Reads a chain directory written by [`write_chain`]. Graphs are rebuilt from
/// the edge log and checked against the recorded hashes.
pub fn read_chain(dir: &Path, n_nodes: usize) -> Result<WeightedChain> {
    let edges_text = read_file(&dir.join("edges.csv"))?;
    let log_text = read_file(&dir.join("edge_log.csv"))?;
    let tau_text = read_file(&dir.join("tau2.csv"))?;
    let mut flips: Vec<(usize, bool, Edge, usize)> = Vec::new();
    for (line, row) in csv_rows(&log_text, "edge_log.csv", "iteration,change,j,k")? {
        let it: usize = field(&row, 0, "edge_log.csv", line)?;
        let add = match row.get(1) {
            Some(&"+") => true,
            Some(&"-") => false,
            _ => return Err(parse_err("edge_log.csv", line, "change must be + or -")),
        };
        let j: usize = field(&row, 2, "edge_log.csv", line)?;
        let k: usize = field(&row, 3, "edge_log.csv", line)?;
        if j == 0 || k == 0 || j > n_nodes || k > n_nodes || j == k {
            return Err(parse_err("edge_log.csv", line, "node index out of range"));
        }
        flips.push((it, add, Edge::new(j - 1, k - 1)?, line));
    }
    let mut chain = WeightedChain {
        n_nodes,
        iterations: Vec::new(),
        graphs: Vec::new(),
        weights: Vec::new(),
        omegas: Vec::new(),
        tau2: Vec::new(),
        log_post: Vec::new(),
        beta_mean: Matrix::zeros(0, n_nodes),
        mu_mean: Vector::zeros(n_nodes),
    };
    let mut g = Graph::empty(n_nodes);
    let mut next_flip = 0;
    for (line, row) in csv_rows(&edges_text, "edges.csv", "iteration,weight,edge_hash")? {
        let it: usize = field(&row, 0, "edges.csv", line)?;
        let w: f64 = field(&row, 1, "edges.csv", line)?;
        let hash = row
            .get(2)
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| parse_err("edges.csv", line, "malformed hash"))?;
        while next_flip < flips.len() && flips[next_flip].0 == it {
            let (_, add, e, fl) = flips[next_flip];
            let changed = if add { g.insert(e) } else { g.remove(e) };
            if !changed {
                return Err(parse_err("edge_log.csv", fl, "flip does not change the graph"));
            }
            next_flip += 1;
        }
        if g.edge_hash() != hash {
            return Err(parse_err("edges.csv", line, "graph does not match the edge log"));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(parse_err("edges.csv", line, "weight must be positive"));
        }
        chain.iterations.push(it);
        chain.graphs.push(g.clone());
        chain.weights.push(w);
    }
    if next_flip != flips.len() {
        return Err(parse_err("edge_log.csv", flips[next_flip].3, "flip without a matching iteration"));
    }
    for (line, row) in csv_rows(&tau_text, "tau2.csv", "iteration,tau2,log_post")? {
        chain.tau2.push(field(&row, 1, "tau2.csv", line)?);
        chain.log_post.push(field(&row, 2, "tau2.csv", line)?);
    }
    if chain.tau2.len() != chain.len() {
        return Err(Error::Input("tau2.csv and edges.csv have different lengths".into()));
    }
    let omega_path = dir.join("omega.bin");
    if omega_path.exists() {
        chain.omegas = read_omega_bin(&omega_path, n_nodes)?;
    }
    let beta_path = dir.join("beta_mean.csv");
    if beta_path.exists() {
        chain.beta_mean = parse_matrix_csv(&read_file(&beta_path)?)?;
    }
    let mu_path = dir.join("mu_mean.csv");
    if mu_path.exists() {
        let m = parse_matrix_csv(&read_file(&mu_path)?)?;
        chain.mu_mean = Vector::from_iterator(m.len(), m.iter().copied());
    }
    if chain.is_empty() {
        return Err(Error::EmptyChain(format!("{} holds no iterations", dir.display())));
    }
    Ok(chain)
}

#[derive(Debug, Clone, Serialize)]
struct SelectionSidecar {
    rule: &'static str,
    alpha: f64,
    threshold: f64,
    n_edges: usize,
}

/// Writes the selected graph as `graph_<rule>.edgelist` plus a JSON sidecar.
pub fn write_selection(dir: &Path, rule: &str, alpha: f64, selected: &posterior::SelectedGraph) -> Result<()> {
    let name: &'static str = if rule == "median" { "median" } else { "bfdr" };
    write_file(&dir.join(format!("graph_{name}.edgelist")), selected.graph.to_edge_list())?;
    write_json(
        &dir.join(format!("graph_{name}.json")),
        &SelectionSidecar {
            rule: name,
            alpha,
            threshold: selected.threshold,
            n_edges: selected.graph.n_edges(),
        },
    )
}

#[derive(Debug, Clone, Serialize)]
struct SummaryJson {
    tau2_hat: f64,
    mu_hat: Vec<f64>,
    n_samples: usize,
    n_stored_omega: usize,
}

/// Writes the summaries of a fit: edge probabilities, the precision estimate,
/// both selected graphs, fitted curves, node bands and two SVG heatmaps.
pub fn write_fit_artifacts(
    dir: &Path,
    summary: &PosteriorSummary,
    chain: &WeightedChain,
    design: &DesignMatrix,
    basis: &BasisSpec,
    alpha: f64,
) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("edge_probs.csv"), matrix_to_csv(summary.edge_probs.values()))?;
    write_file(&dir.join("omega_hat.csv"), matrix_to_csv(&summary.omega_hat))?;
    for (rule, sel) in &summary.selected_graphs {
        write_selection(dir, rule, alpha, sel)?;
    }
    let fitted = posterior::smooth_estimates(chain, design)?;
    let curves = SpectraDataset::new(design.grid.clone(), fitted)?;
    write_file(&dir.join("fitted_curves.csv"), curves.to_csv())?;
    let mut bands = String::from("node,band_lo,band_hi\n");
    for (j, (lo, hi)) in posterior::node_bands(basis)?.into_iter().enumerate() {
        bands.push_str(&format!("{},{},{}\n", j + 1, fmt_f64(lo), fmt_f64(hi)));
    }
    write_file(&dir.join("node_bands.csv"), bands)?;
    write_file(
        &dir.join("edge_probs.svg"),
        svg::heatmap(summary.edge_probs.values(), svg::Palette::Sequential, "posterior edge inclusion probabilities"),
    )?;
    write_file(
        &dir.join("omega_hat.svg"),
        svg::heatmap(&summary.omega_hat, svg::Palette::Diverging, "posterior mean precision matrix"),
    )?;
    write_json(
        &dir.join("summary.json"),
        &SummaryJson {
            tau2_hat: summary.tau2_hat,
            mu_hat: summary.mu_hat.iter().copied().collect(),
            n_samples: chain.len(),
            n_stored_omega: chain.omegas.len(),
        },
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// `spec.json`, `metrics.csv` and `aggregate.csv`.
pub fn write_report(dir: &Path, report: &ReplicateReport) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("spec.json"), &report.spec)?;
    let mut metrics = String::from("replicate,shd_median_rule,shd_bfdr_rule,kl,rmse,runtime_s,error\n");
    for r in &report.rows {
        metrics.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.replicate,
            opt(r.shd_median_rule),
            opt(r.shd_bfdr_rule),
            opt(r.kl),
            opt(r.rmse),
            fmt_f64(r.runtime_s),
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        ));
    }
    write_file(&dir.join("metrics.csv"), metrics)?;
    let mut agg = String::from("metric,count,mean,sd,min,q25,median,q75,max\n");
    for m in report.aggregate() {
        agg.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            m.metric,
            m.count,
            fmt_f64(m.mean),
            fmt_f64(m.sd),
            fmt_f64(m.min),
            fmt_f64(m.q25),
            fmt_f64(m.median),
            fmt_f64(m.q75),
            fmt_f64(m.max)
        ));
    }
    write_file(&dir.join("aggregate.csv"), agg)
}

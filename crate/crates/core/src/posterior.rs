//! Holding-time weighted summaries of a chain and graph selection rules.

use std::collections::BTreeMap;

use crate::bspline::{band_of_node, BasisSpec, DesignMatrix};
use crate::error::{Error, Result};
use crate::gibbs::WeightedChain;
use crate::graph::{all_pairs, Edge, Graph};
use crate::linalg::{self, Matrix, Vector};

pub const DEFAULT_BFDR_ALPHA: f64 = 0.05;

/// Symmetric matrix of posterior edge-inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbMatrix {
    values: Matrix,
}

impl EdgeProbMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        let p = values.nrows();
        if values.ncols() != p {
            return Err(Error::Input("edge probability matrix must be square".into()));
        }
        for a in 0..p {
            if values[(a, a)] != 0.0 {
                return Err(Error::Input("edge probabilities need a zero diagonal".into()));
            }
            for b in 0..p {
                let v = values[(a, b)];
                if !(0.0..=1.0).contains(&v) || v != values[(b, a)] {
                    return Err(Error::Input(format!("invalid edge probability {v} at ({a},{b})")));
                }
            }
        }
        Ok(EdgeProbMatrix { values })
    }

    /// From one probability per pair in `all_pairs` order.
    pub fn from_upper(p: usize, probs: &[f64]) -> Result<Self> {
        let mut m = Matrix::zeros(p, p);
        for (e, &v) in all_pairs(p).zip(probs) {
            m[(e.lo(), e.hi())] = v;
            m[(e.hi(), e.lo())] = v;
        }
        EdgeProbMatrix::new(m)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, e: Edge) -> f64 {
        self.values[(e.lo(), e.hi())]
    }

    fn upper(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        all_pairs(self.n_nodes()).map(|e| (e, self.get(e)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    Median,
    Bfdr { alpha: f64 },
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        if let SelectionRule::Bfdr { alpha } = self {
            if !(*alpha > 0.0 && *alpha <= 1.0) {
                return Err(Error::InvalidSpec(format!("BFDR alpha {alpha} must lie in (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectionRule::Median => "median",
            SelectionRule::Bfdr { .. } => "bfdr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedGraph {
    pub graph: Graph,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub omega_hat: Matrix,
    pub edge_probs: EdgeProbMatrix,
    pub selected_graphs: BTreeMap<&'static str, SelectedGraph>,
    pub beta_hat: Matrix,
    pub mu_hat: Vector,
    pub tau2_hat: f64,
}

fn total_weight(ws: impl Iterator<Item = f64>) -> Result<f64> {
    let total: f64 = ws.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric(format!("total chain weight is {total}")));
    }
    Ok(total)
}

/// Holding-time weighted average of the stored precision matrices.
pub fn omega_hat(chain: &WeightedChain) -> Result<Matrix> {
    let first = chain
        .omegas
        .first()
        .ok_or_else(|| Error::EmptyChain("no stored precision matrices".into()))?;
    let total = total_weight(chain.omegas.iter().map(|o| o.weight))?;
    let mut acc = Matrix::zeros(first.values.nrows(), first.values.ncols());
    for o in &chain.omegas {
        acc += &o.values * (o.weight / total);
    }
    Ok(linalg::symmetrize(&acc))
}

/// `p_jk = sum_t 1((j,k) in E_t) w_t / sum_t w_t`.
pub fn edge_probs(chain: &WeightedChain) -> Result<EdgeProbMatrix> {
    if chain.is_empty() {
        return Err(Error::EmptyChain("no graphs in chain".into()));
    }
    let p = chain.n_nodes;
    let total = total_weight(chain.weights.iter().copied())?;
    let mut acc = Matrix::zeros(p, p);
    for (g, w) in chain.graphs.iter().zip(&chain.weights) {
        for e in g.edges() {
            acc[(e.lo(), e.hi())] += w;
        }
    }
    let mut m = Matrix::zeros(p, p);
    for e in all_pairs(p) {
        let v = (acc[(e.lo(), e.hi())] / total).clamp(0.0, 1.0);
        m[(e.lo(), e.hi())] = v;
        m[(e.hi(), e.lo())] = v;
    }
    EdgeProbMatrix::new(m)
}

/// Edges with inclusion probability strictly above 0.5.
pub fn select_median_graph(probs: &EdgeProbMatrix) -> Graph {
    let edges = probs.upper().filter(|(_, v)| *v > 0.5).map(|(e, _)| e);
    Graph::from_edges(probs.n_nodes(), edges).expect("pairs are valid edges")
}

/// Mean of `1 - p` over the pairs with `p >= s`, or `None` when no pair
/// qualifies.
pub fn bfdr(probs: &EdgeProbMatrix, s: f64) -> Option<f64> {
    let (num, den) = probs
        .upper()
        .filter(|(_, v)| *v >= s)
        .fold((0.0, 0usize), |(num, den), (_, v)| (num + (1.0 - v), den + 1));
    (den > 0).then(|| num / den as f64)
}

/// Smallest observed positive probability `s` with `BFDR(s) < alpha`, and the
/// graph of pairs with `p >= s`. Falls back to the empty graph at `s = 1`.
pub fn select_bfdr_graph(probs: &EdgeProbMatrix, alpha: f64) -> Result<SelectedGraph> {
    SelectionRule::Bfdr { alpha }.validate()?;
    let mut candidates: Vec<f64> = probs.upper().map(|(_, v)| v).filter(|v| *v > 0.0).collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("probabilities are finite"));
    candidates.dedup();
    for s in candidates {
        if bfdr(probs, s).is_some_and(|f| f < alpha) {
            let edges = probs.upper().filter(|(_, v)| *v >= s).map(|(e, _)| e);
            return Ok(SelectedGraph {
                graph: Graph::from_edges(probs.n_nodes(), edges)?,
                threshold: s,
            });
        }
    }
    Ok(SelectedGraph {
        graph: Graph::empty(probs.n_nodes()),
        threshold: 1.0,
    })
}

pub fn select(probs: &EdgeProbMatrix, rule: SelectionRule) -> Result<SelectedGraph> {
    match rule {
        SelectionRule::Median => Ok(SelectedGraph {
            graph: select_median_graph(probs),
            threshold: 0.5,
        }),
        SelectionRule::Bfdr { alpha } => select_bfdr_graph(probs, alpha),
    }
}

/// `Phi beta_i` for every curve, rows per curve.
pub fn smooth_estimates(chain: &WeightedChain, design: &DesignMatrix) -> Result<Matrix> {
    if chain.beta_mean.ncols() != design.n_basis() {
        return Err(Error::Input("chain and design disagree on the basis size".into()));
    }
    Ok(&chain.beta_mean * design.values.transpose())
}

/// Nominal wavelength band `(lo, hi)` of every node.
pub fn node_bands(spec: &BasisSpec) -> Result<Vec<(f64, f64)>> {
    (0..spec.n_basis).map(|j| band_of_node(spec, j)).collect()
}

pub fn summarize(chain: &WeightedChain, alpha: f64) -> Result<PosteriorSummary> {
    let probs = edge_probs(chain)?;
    let mut selected = BTreeMap::new();
    for rule in [SelectionRule::Median, SelectionRule::Bfdr { alpha }] {
        selected.insert(rule.name(), select(&probs, rule)?);
    }
    Ok(PosteriorSummary {
        omega_hat: omega_hat(chain)?,
        edge_probs: probs,
        selected_graphs: selected,
        beta_hat: chain.beta_mean.clone(),
        mu_hat: chain.mu_mean.clone(),
        tau2_hat: chain.tau2_mean(),
    })
}

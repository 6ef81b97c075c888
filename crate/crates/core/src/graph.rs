//! Undirected simple graphs on coefficient nodes, graph priors and the
//! structural Hamming distance.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Unordered node pair stored as `(lo, hi)` with `lo < hi`, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(pub usize, pub usize);

impl Edge {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::Input(format!("self-loop on node {}", a + 1)));
        }
        Ok(if a < b { Edge(a, b) } else { Edge(b, a) })
    }

    pub fn lo(&self) -> usize {
        self.0
    }

    pub fn hi(&self) -> usize {
        self.1
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.0 + 1, self.1 + 1)
    }
}

const WORD: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n_nodes: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    n_edges: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n_nodes", &self.n_nodes)
            .field("edges", &self.edges().collect::<Vec<_>>())
            .finish()
    }
}

impl Graph {
    pub fn empty(n_nodes: usize) -> Self {
        let words_per_row = n_nodes.div_ceil(WORD).max(1);
        Graph {
            n_nodes,
            words_per_row,
            bits: vec![0; words_per_row * n_nodes],
            n_edges: 0,
        }
    }

    pub fn complete(n_nodes: usize) -> Self {
        let mut g = Graph::empty(n_nodes);
        for j in 0..n_nodes {
            for k in (j + 1)..n_nodes {
                g.insert(Edge(j, k));
            }
        }
        g
    }

    pub fn from_edges(n_nodes: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut g = Graph::empty(n_nodes);
        for e in edges {
            if e.hi() >= n_nodes || e.lo() >= e.hi() {
                return Err(Error::Input(format!(
                    "edge {e} invalid for a graph on {n_nodes} nodes"
                )));
            }
            g.insert(e);
        }
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// p(p - 1)/2.
    pub fn max_edges(&self) -> usize {
        self.n_nodes * self.n_nodes.saturating_sub(1) / 2
    }

    fn bit(&self, a: usize, b: usize) -> bool {
        (self.bits[a * self.words_per_row + b / WORD] >> (b % WORD)) & 1 == 1
    }

    fn set_bit(&mut self, a: usize, b: usize, on: bool) {
        let w = &mut self.bits[a * self.words_per_row + b / WORD];
        if on {
            *w |= 1 << (b % WORD);
        } else {
            *w &= !(1 << (b % WORD));
        }
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.bit(e.lo(), e.hi())
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.bit(a, b)
    }

    /// Returns whether the edge was newly inserted.
    pub fn insert(&mut self, e: Edge) -> bool {
        if self.contains(e) {
            return false;
        }
        self.set_bit(e.lo(), e.hi(), true);
        self.set_bit(e.hi(), e.lo(), true);
        self.n_edges += 1;
        true
    }

    /// Returns whether the edge was present.
    pub fn remove(&mut self, e: Edge) -> bool {
        if !self.contains(e) {
            return false;
        }
        self.set_bit(e.lo(), e.hi(), false);
        self.set_bit(e.hi(), e.lo(), false);
        self.n_edges -= 1;
        true
    }

    pub fn with_edge(&self, e: Edge) -> Graph {
        let mut g = self.clone();
        g.insert(e);
        g
    }

    pub fn without_edge(&self, e: Edge) -> Graph {
        let mut g = self.clone();
        g.remove(e);
        g
    }

    /// Present edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        all_pairs(self.n_nodes).filter(move |&e| self.contains(e))
    }

    /// Absent pairs (the complement edge set) in lexicographic order.
    pub fn non_edges(&self) -> impl Iterator<Item = Edge> + '_ {
        all_pairs(self.n_nodes).filter(move |&e| !self.contains(e))
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        (0..self.n_nodes).filter(|&b| self.adjacent(node, b)).collect()
    }

    pub fn degree(&self, node: usize) -> usize {
        (0..self.n_nodes).filter(|&b| self.adjacent(node, b)).count()
    }

    /// Stable 64-bit FNV-1a hash of the edge list, for trace files.
    pub fn edge_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.n_nodes as u64);
        for e in self.edges() {
            feed(e.lo() as u64);
            feed(e.hi() as u64);
        }
        h
    }

    /// p x p symmetric 0/1 adjacency matrix.
    pub fn adjacency_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n_nodes, self.n_nodes, |a, b| {
            if self.adjacent(a, b) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// One `j,k` pair per line, 1-based.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in self.edges() {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse_edge_list(n_nodes: usize, text: &str) -> Result<Graph> {
        let mut g = Graph::empty(n_nodes);
        for (row, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse = |field: Option<&str>, column: usize| -> Result<usize> {
                field
                    .and_then(|f| f.trim().parse::<usize>().ok())
                    .filter(|&v| v >= 1 && v <= n_nodes)
                    .ok_or_else(|| Error::Parse {
                        row: row + 1,
                        column,
                        message: format!("expected a node index in 1..={n_nodes}"),
                    })
            };
            let mut fields = line.split(',');
            let j = parse(fields.next(), 1)?;
            let k = parse(fields.next(), 2)?;
            if j >= k {
                return Err(Error::Parse {
                    row: row + 1,
                    column: 1,
                    message: format!("edge {j},{k} must satisfy j < k"),
                });
            }
            g.insert(Edge(j - 1, k - 1));
        }
        Ok(g)
    }

    /// Adjacency CSV: p rows of p comma-separated 0/1 values.
    pub fn to_adjacency_csv(&self) -> String {
        let mut out = String::new();
        for a in 0..self.n_nodes {
            let row: Vec<&str> = (0..self.n_nodes)
                .map(|b| if self.adjacent(a, b) { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse_adjacency_csv(text: &str) -> Result<Graph> {
        let rows: Vec<Vec<&str>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(str::trim).collect())
            .collect();
        let p = rows.len();
        let mut g = Graph::empty(p);
        for (a, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Parse {
                    row: a + 1,
                    column: row.len().min(p) + 1,
                    message: format!("expected {p} columns"),
                });
            }
            for (b, cell) in row.iter().enumerate() {
                let on = match *cell {
                    "0" => false,
                    "1" => true,
                    _ => {
                        return Err(Error::Parse {
                            row: a + 1,
                            column: b + 1,
                            message: format!("expected 0 or 1, found {cell:?}"),
                        })
                    }
                };
                let mirrored = rows[b].get(a).copied() == Some("1");
                if (a == b && on) || on != mirrored {
                    return Err(Error::Parse {
                        row: a + 1,
                        column: b + 1,
                        message: "adjacency must be symmetric with a zero diagonal".into(),
                    });
                }
                if on && a < b {
                    g.insert(Edge(a, b));
                }
            }
        }
        Ok(g)
    }
}

pub fn all_pairs(p: usize) -> impl Iterator<Item = Edge> {
    (0..p).flat_map(move |j| ((j + 1)..p).map(move |k| Edge(j, k)))
}

/// Per-edge inclusion probability of the Bernoulli graph prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Theta {
    Common(f64),
    /// Symmetric p x p matrix; only the upper triangle is read.
    PerEdge(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GraphPrior {
    Uniform,
    Bernoulli(Theta),
}

impl GraphPrior {
    pub fn bernoulli(theta: f64) -> Result<Self> {
        let prior = GraphPrior::Bernoulli(Theta::Common(theta));
        prior.validate(None)?;
        Ok(prior)
    }

    pub fn validate(&self, n_nodes: Option<usize>) -> Result<()> {
        let check = |t: f64| {
            if t > 0.0 && t < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!(
                    "edge probability {t} must lie strictly inside (0, 1)"
                )))
            }
        };
        match self {
            GraphPrior::Uniform => Ok(()),
            GraphPrior::Bernoulli(Theta::Common(t)) => check(*t),
            GraphPrior::Bernoulli(Theta::PerEdge(m)) => {
                if let Some(p) = n_nodes {
                    if m.len() != p || m.iter().any(|row| row.len() != p) {
                        return Err(Error::Input(format!(
                            "edge-probability matrix is not {p} x {p}"
                        )));
                    }
                }
                for (j, row) in m.iter().enumerate() {
                    for &t in row.iter().skip(j + 1) {
                        check(t)?;
                    }
                }
                Ok(())
            }
        }
    }

    fn theta(&self, e: Edge) -> Option<f64> {
        match self {
            GraphPrior::Uniform => None,
            GraphPrior::Bernoulli(Theta::Common(t)) => Some(*t),
            GraphPrior::Bernoulli(Theta::PerEdge(m)) => Some(m[e.lo()][e.hi()]),
        }
    }

    /// Log prior mass of `g` up to an additive constant; 0 for the uniform prior.
    pub fn log_prior(&self, g: &Graph) -> Result<f64> {
        if let GraphPrior::Bernoulli(Theta::PerEdge(m)) = self {
            if m.len() != g.n_nodes() {
                return Err(Error::Input(format!(
                    "prior is defined on {} nodes, graph has {}",
                    m.len(),
                    g.n_nodes()
                )));
            }
        }
        Ok(match self {
            GraphPrior::Uniform => 0.0,
            GraphPrior::Bernoulli(Theta::Common(t)) => {
                let e = g.n_edges() as f64;
                e * t.ln() + (g.max_edges() as f64 - e) * (1.0 - t).ln()
            }
            GraphPrior::Bernoulli(Theta::PerEdge(_)) => all_pairs(g.n_nodes())
                .map(|e| {
                    let t = self.theta(e).unwrap_or(0.5);
                    if g.contains(e) {
                        t.ln()
                    } else {
                        (1.0 - t).ln()
                    }
                })
                .sum(),
        })
    }

    /// log pi(G -/+ e) / pi(G): removal when `present`, insertion otherwise.
    pub fn log_ratio_edge(&self, e: Edge, present: bool) -> f64 {
        match self.theta(e) {
            None => 0.0,
            Some(t) => {
                let odds = (t / (1.0 - t)).ln();
                if present {
                    -odds
                } else {
                    odds
                }
            }
        }
    }

    pub fn prior_ratio_edge(&self, e: Edge, present: bool) -> f64 {
        self.log_ratio_edge(e, present).exp()
    }
}

/// Number of labelled graphs on `p` nodes, `2^(p(p-1)/2)`, or `None` if it
/// does not fit in a `u128` (p > 16).
pub fn graph_space_size(p: usize) -> Option<u128> {
    let exponent = p * p.saturating_sub(1) / 2;
    if exponent >= 128 {
        None
    } else {
        Some(1u128 << exponent)
    }
}

/// Structural Hamming distance: size of the symmetric difference of the edge
/// sets, optionally divided by p(p-1)/2.
pub fn shd(a: &Graph, b: &Graph, standardized: bool) -> Result<f64> {
    if a.n_nodes() != b.n_nodes() {
        return Err(Error::Input(format!(
            "graphs have {} and {} nodes",
            a.n_nodes(),
            b.n_nodes()
        )));
    }
    let diff: u32 = a
        .bits
        .iter()
        .zip(&b.bits)
        .map(|(x, y)| (x ^ y).count_ones())
        .sum();
    // each undirected edge is stored twice
    let count = (diff / 2) as f64;
    if standardized {
        let max = a.max_edges();
        Ok(if max == 0 { 0.0 } else { count / max as f64 })
    } else {
        Ok(count)
    }
}

fn check_probability(sparsity: f64) -> Result<()> {
    if (0.0..=1.0).contains(&sparsity) {
        Ok(())
    } else {
        Err(Error::Input(format!("sparsity {sparsity} is not a probability")))
    }
}

/// Erdos-Renyi graph: every pair is an edge independently with probability `sparsity`.
pub fn sample_random_graph<R: Rng + ?Sized>(p: usize, sparsity: f64, rng: &mut R) -> Result<Graph> {
    check_probability(sparsity)?;
    let mut g = Graph::empty(p);
    for e in all_pairs(p) {
        if rng.random::<f64>() < sparsity {
            g.insert(e);
        }
    }
    Ok(g)
}

/// Edges drawn independently with probability `sparsity`, within blocks only.
/// `blocks` must partition `0..p`.
pub fn sample_block_graph<R: Rng + ?Sized>(
    p: usize,
    blocks: &[Vec<usize>],
    sparsity: f64,
    rng: &mut R,
) -> Result<Graph> {
    check_probability(sparsity)?;
    let mut label = vec![usize::MAX; p];
    for (b, block) in blocks.iter().enumerate() {
        for &node in block {
            if node >= p {
                return Err(Error::Input(format!("block node {} exceeds p = {p}", node + 1)));
            }
            if label[node] != usize::MAX {
                return Err(Error::Input(format!("node {} appears in two blocks", node + 1)));
            }
            label[node] = b;
        }
    }
    if let Some(missing) = label.iter().position(|&l| l == usize::MAX) {
        return Err(Error::Input(format!("node {} is in no block", missing + 1)));
    }
    let mut g = Graph::empty(p);
    for e in all_pairs(p) {
        if rng.random::<f64>() < sparsity && label[e.lo()] == label[e.hi()] {
            g.insert(e);
        }
    }
    Ok(g)
}

/// Contiguous blocks of the given sizes, e.g. `[10, 20, 10]` for p = 40.
pub fn contiguous_blocks(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let block = (start..start + s).collect();
            start += s;
            block
        })
        .collect()
}

//! G-Wishart distribution on precision matrices that are Markov with respect
//! to a graph.
//!
//! Density convention: `p(Omega | G) ∝ |Omega|^{(d-2)/2} exp(-tr(Omega D)/2)`
//! on the cone of positive-definite matrices with zeros at the non-edges of
//! `G`. On the complete graph this is the standard Wishart with `d + p - 1`
//! degrees of freedom and scale matrix `D^{-1}`.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{self, Matrix};
use crate::parallel::{map_indexed, Execution};
use crate::rng;

pub const COMPLETION_TOL: f64 = 1e-8;
pub const COMPLETION_MAX_ITER: usize = 1000;
/// Largest graph accepted by the Monte Carlo normalizing-constant estimator.
pub const MAX_NORMCONST_NODES: usize = 12;
pub const MIN_NORMCONST_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GWishartParams {
    /// Shape `d > 2`.
    pub shape: f64,
    /// Inverse scale `D`, symmetric positive definite.
    pub inv_scale: Matrix,
}

impl GWishartParams {
    pub fn new(shape: f64, inv_scale: Matrix) -> Result<Self> {
        let params = GWishartParams { shape, inv_scale };
        params.validate()?;
        Ok(params)
    }

    /// `D = scale * I_p`.
    pub fn isotropic(shape: f64, scale: f64, p: usize) -> Result<Self> {
        Self::new(shape, Matrix::identity(p, p) * scale)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 2.0) {
            return Err(Error::InvalidSpec(format!(
                "G-Wishart shape must exceed 2, got {}",
                self.shape
            )));
        }
        if !self.inv_scale.is_square() {
            return Err(Error::InvalidSpec("inverse scale matrix is not square".into()));
        }
        if linalg::max_abs_asymmetry(&self.inv_scale) > 1e-12 * (1.0 + self.inv_scale.amax()) {
            return Err(Error::InvalidSpec("inverse scale matrix is not symmetric".into()));
        }
        linalg::cholesky(&self.inv_scale, "inverse scale matrix")
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.inv_scale.nrows()
    }

    /// Conjugate update after observing `n` centred vectors with scatter `U`.
    pub fn posterior(&self, n: usize, scatter: &Matrix) -> GWishartParams {
        GWishartParams {
            shape: self.shape + n as f64,
            inv_scale: linalg::symmetrize(&(&self.inv_scale + scatter)),
        }
    }
}

/// Positive-definite matrix with exact zeros at the non-edges of its graph.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    values: Matrix,
    graph: Graph,
}

impl PrecisionMatrix {
    pub fn new(values: Matrix, graph: Graph) -> Result<Self> {
        let p = graph.n_nodes();
        if values.shape() != (p, p) {
            return Err(Error::Input(format!(
                "precision matrix is {:?}, graph has {p} nodes",
                values.shape()
            )));
        }
        for a in 0..p {
            for b in (a + 1)..p {
                if !graph.adjacent(a, b) && (values[(a, b)] != 0.0 || values[(b, a)] != 0.0) {
                    return Err(Error::Domain(format!(
                        "entry ({}, {}) must be zero for a non-edge",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        if linalg::max_abs_asymmetry(&values) > 1e-12 * (1.0 + values.amax()) {
            return Err(Error::Domain("precision matrix is not symmetric".into()));
        }
        linalg::cholesky(&values, "precision matrix")?;
        Ok(PrecisionMatrix { values, graph })
    }

    pub fn identity(p: usize) -> Self {
        PrecisionMatrix {
            values: Matrix::identity(p, p),
            graph: Graph::empty(p),
        }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn into_parts(self) -> (Matrix, Graph) {
        (self.values, self.graph)
    }
}

/// `((d - 2)/2) log|Omega| - tr(Omega D)/2`.
pub fn log_density_unnorm(params: &GWishartParams, omega: &PrecisionMatrix) -> Result<f64> {
    let values = omega.values();
    if params.dim() != values.nrows() {
        return Err(Error::Input("dimension mismatch between Omega and D".into()));
    }
    let logdet = linalg::spd_logdet(values, "precision matrix")?;
    Ok(0.5 * (params.shape - 2.0) * logdet - 0.5 * linalg::trace_product(values, &params.inv_scale))
}

/// Standard Wishart draw with `dof` degrees of freedom and scale `L L^T`
/// (Bartlett decomposition).
pub fn sample_wishart<R: Rng + ?Sized>(dof: f64, scale_chol_l: &Matrix, rng: &mut R) -> Result<Matrix> {
    let p = scale_chol_l.nrows();
    if !(dof > p as f64 - 1.0) {
        return Err(Error::Domain(format!(
            "Wishart needs more than {} degrees of freedom, got {dof}",
            p - 1
        )));
    }
    let mut a = Matrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(dof - i as f64)
            .map_err(|e| Error::Numeric(format!("chi-squared: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = scale_chol_l * a;
    Ok(linalg::symmetrize(&(&la * la.transpose())))
}

/// Iterative proportional completion: returns the `Omega` Markov with respect to
/// `g` whose inverse agrees with `sigma` on the diagonal and on every edge.
pub fn complete_matrix(
    sigma: &Matrix,
    g: &Graph,
    tol: f64,
    max_iter: usize,
) -> Result<PrecisionMatrix> {
    let p = g.n_nodes();
    if sigma.shape() != (p, p) {
        return Err(Error::Input(format!(
            "covariance is {:?}, graph has {p} nodes",
            sigma.shape()
        )));
    }
    linalg::cholesky(sigma, "covariance")?;
    let neighbors: Vec<Vec<usize>> = (0..p).map(|j| g.neighbors(j)).collect();
    let mut w = sigma.clone();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_iter {
        sweeps += 1;
        residual = 0.0;
        for j in 0..p {
            let nb = &neighbors[j];
            let mut column = vec![0.0; p];
            if !nb.is_empty() {
                let w_nn = Matrix::from_fn(nb.len(), nb.len(), |a, b| w[(nb[a], nb[b])]);
                let rhs = linalg::Vector::from_iterator(nb.len(), nb.iter().map(|&a| sigma[(a, j)]));
                let beta = linalg::cholesky(&w_nn, "neighbour block")?.solve(&rhs);
                for (l, slot) in column.iter_mut().enumerate() {
                    if l != j {
                        *slot = nb.iter().zip(beta.iter()).map(|(&a, b)| w[(l, a)] * b).sum();
                    }
                }
            }
            for (l, &v) in column.iter().enumerate() {
                if l != j {
                    residual = residual.max((w[(l, j)] - v).abs());
                    w[(l, j)] = v;
                    w[(j, l)] = v;
                }
            }
        }
        if residual < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations: sweeps,
            residual,
        });
    }
    let mut omega = linalg::spd_inverse(&w, "completed covariance")?;
    for a in 0..p {
        for b in (a + 1)..p {
            if !g.adjacent(a, b) {
                omega[(a, b)] = 0.0;
                omega[(b, a)] = 0.0;
            }
        }
    }
    PrecisionMatrix::new(omega, g.clone())
}

/// Exact G-Wishart draw: an unconstrained Wishart precision is inverted and
/// its covariance completed against `g`.
pub fn sample_direct<R: Rng + ?Sized>(
    params: &GWishartParams,
    g: &Graph,
    rng: &mut R,
) -> Result<PrecisionMatrix> {
    let p = g.n_nodes();
    if params.dim() != p {
        return Err(Error::Input("dimension mismatch between D and the graph".into()));
    }
    let scale = linalg::spd_inverse(&params.inv_scale, "inverse scale matrix")?;
    let scale_l = linalg::cholesky(&scale, "scale matrix")?.l();
    let k = sample_wishart(params.shape + p as f64 - 1.0, &scale_l, rng)?;
    let sigma = linalg::spd_inverse(&k, "Wishart draw")?;
    complete_matrix(&sigma, g, COMPLETION_TOL, COMPLETION_MAX_ITER)
}

/// Monte Carlo estimate of `log I_G(d, D)` with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConstEstimate {
    pub log_estimate: f64,
    pub std_error: f64,
}

/// Shared pieces of the Cholesky-parameterised integral: diagonal of the
/// upper factor `T` of `D^{-1} = T^T T` and its full matrix.
struct CholeskyFrame {
    t: Matrix,
    upper_neighbors: Vec<usize>,
}

impl CholeskyFrame {
    fn new(params: &GWishartParams, g: &Graph) -> Result<Self> {
        let p = g.n_nodes();
        if params.dim() != p {
            return Err(Error::Input("dimension mismatch between D and the graph".into()));
        }
        let scale = linalg::spd_inverse(&params.inv_scale, "inverse scale matrix")?;
        let t = linalg::cholesky(&scale, "scale matrix")?.l().transpose();
        let upper_neighbors = (0..p)
            .map(|i| ((i + 1)..p).filter(|&j| g.adjacent(i, j)).count())
            .collect();
        Ok(CholeskyFrame { t, upper_neighbors })
    }

    /// Log of the integral with the free-element Gaussian and chi factors
    /// integrated out; the Monte Carlo term multiplies this.
    fn log_leading(&self, shape: f64, g: &Graph) -> f64 {
        let p = g.n_nodes();
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut total = 0.0;
        for i in 0..p {
            let k = shape + self.upper_neighbors[i] as f64;
            total += 0.5 * k * std::f64::consts::LN_2 + ln_gamma(0.5 * k) + k * self.t[(i, i)].ln();
        }
        for e in g.edges() {
            total += self.t[(e.hi(), e.hi())].ln() + half_log_2pi;
        }
        total
    }

    /// `sum psi_ij^2` over the non-free upper-triangular entries for one draw
    /// of the free entries.
    fn non_free_square_sum<R: Rng + ?Sized>(&self, shape: f64, g: &Graph, rng: &mut R) -> f64 {
        let p = g.n_nodes();
        let t = &self.t;
        let mut psi = Matrix::zeros(p, p);
        let mut phi = Matrix::zeros(p, p);
        let mut sum = 0.0;
        for i in 0..p {
            let k = shape + self.upper_neighbors[i] as f64;
            let chi: f64 = ChiSquared::new(k).expect("positive degrees of freedom").sample(rng);
            psi[(i, i)] = chi.sqrt();
            phi[(i, i)] = psi[(i, i)] * t[(i, i)];
            for j in (i + 1)..p {
                if g.adjacent(i, j) {
                    psi[(i, j)] = rng.sample(StandardNormal);
                    phi[(i, j)] = (i..=j).map(|l| psi[(i, l)] * t[(l, j)]).sum();
                } else {
                    let cross: f64 = (0..i).map(|l| phi[(l, i)] * phi[(l, j)]).sum();
                    phi[(i, j)] = -cross / phi[(i, i)];
                    let partial: f64 = (i..j).map(|l| psi[(i, l)] * t[(l, j)]).sum();
                    psi[(i, j)] = (phi[(i, j)] - partial) / t[(j, j)];
                    sum += psi[(i, j)] * psi[(i, j)];
                }
            }
        }
        sum
    }
}

/// Closed-form part of `log I_G(d, D)`: exact when every non-free entry of
/// the Cholesky parameterisation vanishes (complete graphs and graphs whose
/// node order is a perfect elimination order with zero cross terms),
/// otherwise an approximation that drops the Monte Carlo correction.
pub fn log_normconst_leading(params: &GWishartParams, g: &Graph) -> Result<f64> {
    let frame = CholeskyFrame::new(params, g)?;
    Ok(frame.log_leading(params.shape, g))
}

const MC_CHUNK: usize = 2048;

pub fn log_normconst_mc<R: Rng + ?Sized>(
    params: &GWishartParams,
    g: &Graph,
    n_samples: usize,
    rng: &mut R,
    exec: Execution,
) -> Result<NormConstEstimate> {
    let p = g.n_nodes();
    if p > MAX_NORMCONST_NODES {
        return Err(Error::Unsupported(format!(
            "Monte Carlo normalizing constant limited to p <= {MAX_NORMCONST_NODES}, got {p}"
        )));
    }
    if n_samples < MIN_NORMCONST_SAMPLES {
        return Err(Error::Input(format!(
            "need at least {MIN_NORMCONST_SAMPLES} samples, got {n_samples}"
        )));
    }
    let frame = CholeskyFrame::new(params, g)?;
    let leading = frame.log_leading(params.shape, g);
    let seed: u64 = rng.random();
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let chunks: Vec<Vec<f64>> = map_indexed(n_chunks, exec, |c| {
        let mut r = rng::stream(seed, c as u64);
        let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
        (0..len)
            .map(|_| -0.5 * frame.non_free_square_sum(params.shape, g, &mut r))
            .collect()
    });
    let logs: Vec<f64> = chunks.into_iter().flatten().collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = logs.len() as f64;
    let scaled: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n;
    let var = scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(NormConstEstimate {
        log_estimate: leading + max + mean.ln(),
        std_error: (var / n).sqrt() / mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::rng::seeded;

    fn random_spd(p: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        let a = Matrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose() + Matrix::identity(p, p) * (p as f64)
    }

    #[test]
    fn shape_must_exceed_two() {
        assert!(GWishartParams::isotropic(2.0, 1.0, 3).is_err());
        assert!(GWishartParams::isotropic(3.0, 1.0, 3).is_ok());
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GWishartParams::new(3.0, bad).is_err());
    }

    #[test]
    fn density_at_identity() {
        let omega = PrecisionMatrix::identity(4);
        let flat = GWishartParams {
            shape: 2.0,
            inv_scale: Matrix::identity(4, 4),
        };
        assert!((log_density_unnorm(&flat, &omega).unwrap() + 2.0).abs() < 1e-14);
        let p2 = GWishartParams::isotropic(3.0, 1.0, 2).unwrap();
        assert!((log_density_unnorm(&p2, &PrecisionMatrix::identity(2)).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn doubling_d_shifts_density_by_half_trace() {
        let sigma = random_spd(3, 1);
        let g = Graph::from_edges(3, [Edge(0, 1)]).unwrap();
        let omega = complete_matrix(&sigma, &g, COMPLETION_TOL, COMPLETION_MAX_ITER).unwrap();
        let d = random_spd(3, 2);
        let a = GWishartParams::new(4.0, d.clone()).unwrap();
        let b = GWishartParams::new(4.0, &d * 2.0).unwrap();
        let shift = log_density_unnorm(&b, &omega).unwrap() - log_density_unnorm(&a, &omega).unwrap();
        let half_trace = 0.5 * (omega.values() * &d).trace();
        assert!((shift + half_trace).abs() < 1e-12);
    }

    #[test]
    fn non_pd_values_rejected() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(PrecisionMatrix::new(m, Graph::complete(2)).is_err());
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 2.0]);
        assert!(PrecisionMatrix::new(m, Graph::empty(2)).is_err());
    }

    #[test]
    fn completion_on_complete_graph_is_inverse() {
        let sigma = random_spd(5, 3);
        let omega = complete_matrix(&sigma, &Graph::complete(5), COMPLETION_TOL, 1).unwrap();
        let inv = linalg::spd_inverse(&sigma, "s").unwrap();
        assert!((omega.values() - inv).amax() < 1e-12);
    }

    #[test]
    fn completion_on_empty_graph_is_diagonal() {
        let sigma = random_spd(4, 4);
        let omega = complete_matrix(&sigma, &Graph::empty(4), COMPLETION_TOL, COMPLETION_MAX_ITER).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b { 1.0 / sigma[(a, a)] } else { 0.0 };
                assert!((omega.values()[(a, b)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn completion_matches_sigma_on_edges_and_is_idempotent() {
        let mut rng = seeded(8);
        for trial in 0..10 {
            let p = 6;
            let g = crate::graph::sample_random_graph(p, 0.4, &mut rng).unwrap();
            let sigma = random_spd(p, 100 + trial);
            let omega = complete_matrix(&sigma, &g, COMPLETION_TOL, COMPLETION_MAX_ITER).unwrap();
            let w = linalg::spd_inverse(omega.values(), "omega").unwrap();
            for a in 0..p {
                assert!((w[(a, a)] - sigma[(a, a)]).abs() < 1e-7);
                for b in (a + 1)..p {
                    if g.adjacent(a, b) {
                        assert!((w[(a, b)] - sigma[(a, b)]).abs() < 1e-7);
                    } else {
                        assert_eq!(omega.values()[(a, b)], 0.0);
                    }
                }
            }
            let again = complete_matrix(&w, &g, COMPLETION_TOL, COMPLETION_MAX_ITER).unwrap();
            assert!((again.values() - omega.values()).amax() < 1e-6);
        }
    }

    #[test]
    fn completion_reports_non_convergence() {
        let sigma = random_spd(5, 6);
        let g = Graph::from_edges(5, [Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(3, 4), Edge(0, 4)]).unwrap();
        match complete_matrix(&sigma, &g, 1e-300, 2) {
            Err(Error::Convergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn direct_draws_have_exact_zeros() {
        let mut rng = seeded(12);
        let params = GWishartParams::isotropic(3.0, 1.0, 7).unwrap();
        for _ in 0..20 {
            let g = crate::graph::sample_random_graph(7, 0.3, &mut rng).unwrap();
            let omega = sample_direct(&params, &g, &mut rng).unwrap();
            for e in g.non_edges() {
                assert_eq!(omega.values()[(e.lo(), e.hi())], 0.0);
            }
            assert!(linalg::cholesky(omega.values(), "omega").is_ok());
        }
    }

    #[test]
    fn monte_carlo_rejects_large_graphs_and_small_budgets() {
        let mut rng = seeded(0);
        let big = GWishartParams::isotropic(3.0, 1.0, 13).unwrap();
        assert!(matches!(
            log_normconst_mc(&big, &Graph::empty(13), 1000, &mut rng, Execution::Sequential),
            Err(Error::Unsupported(_))
        ));
        let small = GWishartParams::isotropic(3.0, 1.0, 3).unwrap();
        assert!(log_normconst_mc(&small, &Graph::empty(3), 999, &mut rng, Execution::Sequential).is_err());
    }

    #[test]
    fn leading_term_is_exact_without_non_free_entries() {
        // Complete and empty graphs with D = I have no non-free cross terms,
        // so every Monte Carlo term equals one.
        let params = GWishartParams::isotropic(3.5, 1.0, 4).unwrap();
        let mut rng = seeded(4);
        for g in [Graph::complete(4), Graph::empty(4)] {
            let lead = log_normconst_leading(&params, &g).unwrap();
            let mc = log_normconst_mc(&params, &g, 1000, &mut rng, Execution::Sequential).unwrap();
            assert!((lead - mc.log_estimate).abs() < 1e-12);
            assert!(mc.std_error < 1e-12);
        }
    }
}

//! Synthetic experiments: graph-structured coefficients pushed through the
//! smoothing model, Matérn Gaussian-process curves, and their scoring.

pub mod matern;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use self::matern::matern;
use crate::bspline::{build_design, uniform_grid, BasisSpec, DesignMatrix};
use crate::dataset::SpectraDataset;
use crate::error::{Error, Result};
use crate::gibbs::{self, Hyperparameters, SamplerControls};
use crate::graph::{self, contiguous_blocks, shd, Graph};
use crate::gwishart::{self, GWishartParams};
use crate::linalg::{self, Matrix, Vector};
use crate::parallel::{self, Execution};
use crate::posterior::{self, SelectionRule};
use crate::rng;
use crate::stats;

pub const SPD_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Nonstructured,
    Clustered,
    GpMatern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub mean_amplitude: f64,
    pub mean_frequency: f64,
    pub variance: f64,
    pub rho: f64,
    pub nu: f64,
}

impl Default for GpParams {
    fn default() -> Self {
        GpParams {
            mean_amplitude: 3.0,
            mean_frequency: 4.0,
            variance: 5.0,
            rho: 0.5,
            nu: 0.5,
        }
    }
}

/// What fitted curves are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RmseTarget {
    #[default]
    Observed,
    Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub p: usize,
    pub n: usize,
    pub r: usize,
    pub domain: (f64, f64),
    pub sparsity: f64,
    pub tau2_true: f64,
    pub gw_d: f64,
    /// `D = gw_d_scale * I`.
    pub gw_d_scale: f64,
    /// Block sizes for the clustered experiment; must sum to `p`.
    #[serde(default)]
    pub block_sizes: Vec<usize>,
    #[serde(default)]
    pub gp: GpParams,
    #[serde(default)]
    pub rmse_target: RmseTarget,
    /// Draw the graph, precision and coefficients once and reuse them.
    #[serde(default)]
    pub freeze_truth: bool,
    pub n_replicates: usize,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Random-graph experiment on `r = 200` points of `[0, 1]`.
    pub fn nonstructured(p: usize, n: usize, sparsity: f64, tau2: f64) -> Self {
        ExperimentSpec {
            kind: ExperimentKind::Nonstructured,
            p,
            n,
            r: 200,
            domain: (0.0, 1.0),
            sparsity,
            tau2_true: tau2,
            gw_d: 3.0,
            gw_d_scale: 1.0,
            block_sizes: Vec::new(),
            gp: GpParams::default(),
            rmse_target: RmseTarget::Observed,
            freeze_truth: false,
            n_replicates: 1,
            seed: 0,
        }
    }

    /// Block-graph experiment with three blocks of sizes `p/4, p/2, p/4`.
    pub fn clustered(p: usize, n: usize, sparsity: f64, tau2: f64) -> Self {
        let q = p / 4;
        ExperimentSpec {
            kind: ExperimentKind::Clustered,
            block_sizes: vec![q, p - 2 * q, q],
            ..ExperimentSpec::nonstructured(p, n, sparsity, tau2)
        }
    }

    /// Gaussian-process curves on `[0, pi/2]` with the default Matérn setup.
    pub fn gp(p: usize, n: usize, r: usize, tau2: f64) -> Self {
        ExperimentSpec {
            kind: ExperimentKind::GpMatern,
            r,
            domain: (0.0, std::f64::consts::FRAC_PI_2),
            gw_d: 5.0,
            gw_d_scale: 5.0,
            ..ExperimentSpec::nonstructured(p, n, 0.0, tau2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.p < 4 || self.n == 0 || self.r < 2 || self.n_replicates == 0 {
            return bad(format!(
                "need p >= 4, n >= 1, r >= 2 and at least one replicate (p={}, n={}, r={}, replicates={})",
                self.p, self.n, self.r, self.n_replicates
            ));
        }
        if !(self.domain.0 < self.domain.1) {
            return bad(format!("empty domain {:?}", self.domain));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return bad(format!("sparsity {} is not in [0, 1]", self.sparsity));
        }
        if !(self.tau2_true >= 0.0) || !self.tau2_true.is_finite() {
            return bad(format!("noise variance {} must be nonnegative", self.tau2_true));
        }
        if !(self.gw_d > 2.0) || !(self.gw_d_scale > 0.0) {
            return bad("G-Wishart needs d > 2 and a positive scale".into());
        }
        match self.kind {
            ExperimentKind::Clustered => {
                if self.block_sizes.iter().sum::<usize>() != self.p || self.block_sizes.contains(&0) {
                    return bad(format!("block sizes {:?} do not partition p = {}", self.block_sizes, self.p));
                }
            }
            ExperimentKind::GpMatern => {
                let gp = &self.gp;
                if !(gp.rho > 0.0 && gp.nu > 0.0 && gp.variance > 0.0) {
                    return bad("Gaussian-process parameters must be positive".into());
                }
            }
            ExperimentKind::Nonstructured => {}
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        BasisSpec::cubic(self.domain.0, self.domain.1, self.p)
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.domain.0, self.domain.1, self.r)
    }

    pub fn gw_params(&self) -> Result<GWishartParams> {
        GWishartParams::isotropic(self.gw_d, self.gw_d_scale, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    pub graph: Option<Graph>,
    pub omega: Option<Matrix>,
    pub betas: Option<Matrix>,
    /// Noise-free curves, rows per curve.
    pub signal: Matrix,
    /// Covariance on the grid (Gaussian-process case).
    pub sigma_grid: Option<Matrix>,
    /// Least-squares projection of `sigma_grid` to coefficient space.
    pub sigma_coef: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub data: SpectraDataset,
    pub design: DesignMatrix,
    pub truth: Truth,
}

/// Graph, precision and coefficients of the structured experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTruth {
    pub graph: Graph,
    pub omega: Matrix,
    pub betas: Matrix,
}

fn add_noise<R: Rng + ?Sized>(signal: &Matrix, tau2: f64, rng: &mut R) -> Matrix {
    if tau2 == 0.0 {
        return signal.clone();
    }
    let sd = tau2.sqrt();
    signal.map(|v| v + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Rows are draws from `N(0, Omega^{-1})`.
fn draw_coefficients<R: Rng + ?Sized>(omega: &Matrix, n: usize, rng: &mut R) -> Result<Matrix> {
    let p = omega.nrows();
    let l = linalg::cholesky(omega, "true precision")?.l();
    let z = Matrix::from_iterator(p, n, (0..p * n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
    let b = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numeric("singular true precision".into()))?;
    Ok(b.transpose())
}

/// Graph from `graph_fn`, precision from `G-Wishart(d, D)` on it, coefficients
/// from `N(0, Omega^{-1})`.
pub fn draw_graph_truth<R: Rng + ?Sized>(
    spec: &ExperimentSpec,
    graph: Graph,
    rng: &mut R,
) -> Result<GraphTruth> {
    let omega = gwishart::sample_direct(&spec.gw_params()?, &graph, rng)?;
    let betas = draw_coefficients(omega.values(), spec.n, rng)?;
    Ok(GraphTruth {
        graph,
        omega: omega.values().clone(),
        betas,
    })
}

fn draw_truth_for<R: Rng + ?Sized>(spec: &ExperimentSpec, rng: &mut R) -> Result<GraphTruth> {
    let graph = match spec.kind {
        ExperimentKind::Nonstructured => graph::sample_random_graph(spec.p, spec.sparsity, rng)?,
        ExperimentKind::Clustered => {
            graph::sample_block_graph(spec.p, &contiguous_blocks(&spec.block_sizes), spec.sparsity, rng)?
        }
        ExperimentKind::GpMatern => return Err(Error::InvalidSpec("no graph truth for the GP experiment".into())),
    };
    draw_graph_truth(spec, graph, rng)
}

/// Pushes coefficients through the design and adds `N(0, tau2)` noise.
pub fn dataset_from_truth<R: Rng + ?Sized>(
    spec: &ExperimentSpec,
    truth: GraphTruth,
    rng: &mut R,
) -> Result<SyntheticDataset> {
    let design = build_design(&spec.basis()?, &spec.grid())?;
    let signal = &truth.betas * design.values.transpose();
    let y = add_noise(&signal, spec.tau2_true, rng);
    Ok(SyntheticDataset {
        data: SpectraDataset::new(spec.grid(), y)?,
        design,
        truth: Truth {
            graph: Some(truth.graph),
            omega: Some(truth.omega),
            betas: Some(truth.betas),
            signal,
            sigma_grid: None,
            sigma_coef: None,
        },
    })
}

fn check_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::InvalidSpec(format!("expected a {kind:?} spec, got {:?}", spec.kind)));
    }
    Ok(())
}

/// Random graph with the given sparsity.
pub fn gen_experiment1<R: Rng + ?Sized>(spec: &ExperimentSpec, rng: &mut R) -> Result<SyntheticDataset> {
    check_kind(spec, ExperimentKind::Nonstructured)?;
    let truth = draw_truth_for(spec, rng)?;
    dataset_from_truth(spec, truth, rng)
}

/// Edges only within the given blocks.
pub fn gen_experiment2<R: Rng + ?Sized>(
    spec: &ExperimentSpec,
    blocks: &[Vec<usize>],
    rng: &mut R,
) -> Result<SyntheticDataset> {
    check_kind(spec, ExperimentKind::Clustered)?;
    let graph = graph::sample_block_graph(spec.p, blocks, spec.sparsity, rng)?;
    let truth = draw_graph_truth(spec, graph, rng)?;
    dataset_from_truth(spec, truth, rng)
}

pub fn gp_mean(spec: &ExperimentSpec, t: f64) -> f64 {
    spec.gp.mean_amplitude * (spec.gp.mean_frequency * t).sin()
}

pub fn gp_covariance(spec: &ExperimentSpec, grid: &[f64]) -> Result<Matrix> {
    let r = grid.len();
    let mut cov = Matrix::zeros(r, r);
    for a in 0..r {
        for b in a..r {
            let v = spec.gp.variance * matern((grid[a] - grid[b]).abs(), spec.gp.rho, spec.gp.nu)?;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// `(Phi^T Phi)^{-1} Phi^T Sigma Phi (Phi^T Phi)^{-1}`.
pub fn project_covariance(sigma_grid: &Matrix, design: &DesignMatrix) -> Result<Matrix> {
    let phi = &design.values;
    let ptp = linalg::cholesky(&(phi.transpose() * phi), "design Gram matrix")?;
    let left = ptp.solve(&phi.transpose());
    Ok(linalg::symmetrize(&(&left * sigma_grid * left.transpose())))
}

/// `n` curves from the Gaussian process with mean `a sin(f t)` and covariance
/// `variance * Matérn(|s - t|; rho, nu)` plus `N(0, tau2)` noise.
pub fn gen_gp_dataset<R: Rng + ?Sized>(spec: &ExperimentSpec, rng: &mut R) -> Result<SyntheticDataset> {
    check_kind(spec, ExperimentKind::GpMatern)?;
    let grid = spec.grid();
    let r = grid.len();
    let design = build_design(&spec.basis()?, &grid)?;
    let sigma = gp_covariance(spec, &grid)?;
    let jittered = &sigma + Matrix::identity(r, r) * SPD_JITTER;
    let l = linalg::cholesky(&jittered, "Gaussian-process covariance")?.l();
    let mean = Vector::from_iterator(r, grid.iter().map(|&t| gp_mean(spec, t)));
    let z = Matrix::from_iterator(r, spec.n, (0..r * spec.n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
    let mut signal = (l * z).transpose();
    for mut row in signal.row_iter_mut() {
        row += mean.transpose();
    }
    let y = add_noise(&signal, spec.tau2_true, rng);
    let sigma_coef = project_covariance(&sigma, &design)?;
    Ok(SyntheticDataset {
        data: SpectraDataset::new(grid, y)?,
        design,
        truth: Truth {
            graph: None,
            omega: None,
            betas: None,
            signal,
            sigma_grid: Some(sigma),
            sigma_coef: Some(sigma_coef),
        },
    })
}

/// `KL = 0.5 [tr(Sigma_true^{-1} Sigma_hat) - p - log(|Sigma_hat| / |Sigma_true|)]`.
pub fn kl_divergence(sigma_true: &Matrix, sigma_hat: &Matrix) -> Result<f64> {
    let p = sigma_true.nrows();
    if sigma_true.shape() != sigma_hat.shape() || sigma_true.ncols() != p {
        return Err(Error::Input("covariance matrices must be square and of equal size".into()));
    }
    let ct = linalg::cholesky(sigma_true, "true covariance").map_err(|_| Error::Domain("true covariance is not positive definite".into()))?;
    let ch = linalg::cholesky(sigma_hat, "estimated covariance").map_err(|_| Error::Domain("estimated covariance is not positive definite".into()))?;
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let tr = ct.solve(sigma_hat).trace();
    Ok((0.5 * (tr - p as f64 - (logdet(&ch) - logdet(&ct)))).max(0.0))
}

pub fn rmse_curves(fitted: &Matrix, truth: &Matrix) -> Result<f64> {
    if fitted.shape() != truth.shape() {
        return Err(Error::Input(format!(
            "shape mismatch: {:?} vs {:?}",
            fitted.shape(),
            truth.shape()
        )));
    }
    if fitted.is_empty() {
        return Err(Error::Input("no values to compare".into()));
    }
    Ok(((fitted - truth).norm_squared() / fitted.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub replicate: usize,
    pub shd_median_rule: Option<f64>,
    pub shd_bfdr_rule: Option<f64>,
    pub kl: Option<f64>,
    pub rmse: Option<f64>,
    pub runtime_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<ReplicateMetrics>,
}

impl ReplicateReport {
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| match metric {
                "shd_median_rule" => r.shd_median_rule,
                "shd_bfdr_rule" => r.shd_bfdr_rule,
                "kl" => r.kl,
                "rmse" => r.rmse,
                "runtime_s" => r.error.is_none().then_some(r.runtime_s),
                _ => None,
            })
            .collect()
    }

    pub fn aggregate(&self) -> Vec<MetricSummary> {
        ["shd_median_rule", "shd_bfdr_rule", "kl", "rmse", "runtime_s"]
            .into_iter()
            .filter_map(|m| {
                let v = self.values(m);
                (!v.is_empty()).then(|| MetricSummary {
                    metric: m.to_string(),
                    count: v.len(),
                    mean: stats::mean(&v),
                    sd: if v.len() > 1 { stats::variance(&v).sqrt() } else { 0.0 },
                    min: stats::quantile(&v, 0.0),
                    q25: stats::quantile(&v, 0.25),
                    median: stats::quantile(&v, 0.5),
                    q75: stats::quantile(&v, 0.75),
                    max: stats::quantile(&v, 1.0),
                })
            })
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Fitting options of a replicate run.
#[derive(Debug, Clone)]
pub struct FitSettings {
    pub hp: Hyperparameters,
    pub controls: SamplerControls,
    pub alpha: f64,
}

pub fn generate(spec: &ExperimentSpec, replicate: usize) -> Result<SyntheticDataset> {
    let mut data_rng = rng::stream(spec.seed, 2 * replicate as u64);
    match spec.kind {
        ExperimentKind::GpMatern => gen_gp_dataset(spec, &mut data_rng),
        _ if spec.freeze_truth => {
            let truth = draw_truth_for(spec, &mut rng::stream(spec.seed, u64::MAX))?;
            dataset_from_truth(spec, truth, &mut data_rng)
        }
        ExperimentKind::Nonstructured => gen_experiment1(spec, &mut data_rng),
        ExperimentKind::Clustered => {
            gen_experiment2(spec, &contiguous_blocks(&spec.block_sizes), &mut data_rng)
        }
    }
}

fn score(spec: &ExperimentSpec, settings: &FitSettings, replicate: usize) -> Result<ReplicateMetrics> {
    let start = Instant::now();
    let synth = generate(spec, replicate)?;
    let mut chain_rng = rng::stream(spec.seed, 2 * replicate as u64 + 1);
    let chain = gibbs::run_chain(&synth.data, &synth.design, &settings.hp, &settings.controls, &mut chain_rng)?;
    let summary = posterior::summarize(&chain, settings.alpha)?;
    let mut m = ReplicateMetrics {
        replicate,
        shd_median_rule: None,
        shd_bfdr_rule: None,
        kl: None,
        rmse: None,
        runtime_s: 0.0,
        error: None,
    };
    if let Some(g) = &synth.truth.graph {
        let rule = |name: &str| summary.selected_graphs.get(name).map(|s| &s.graph);
        let median = rule(SelectionRule::Median.name()).expect("median rule present");
        let bfdr = rule("bfdr").expect("bfdr rule present");
        m.shd_median_rule = Some(shd(g, median, true)?);
        m.shd_bfdr_rule = Some(shd(g, bfdr, true)?);
    }
    if let Some(sigma_true) = &synth.truth.sigma_coef {
        let sigma_hat = linalg::spd_inverse(&summary.omega_hat, "precision estimate")?;
        m.kl = Some(kl_divergence(sigma_true, &sigma_hat)?);
        let fitted = posterior::smooth_estimates(&chain, &synth.design)?;
        let target = match spec.rmse_target {
            RmseTarget::Observed => synth.data.curves(),
            RmseTarget::Signal => &synth.truth.signal,
        };
        m.rmse = Some(rmse_curves(&fitted, target)?);
    }
    m.runtime_s = start.elapsed().as_secs_f64();
    Ok(m)
}

/// Generates, fits and scores every replicate. Replicate `k` draws its data
/// from stream `2k` and its chain from stream `2k + 1` of `spec.seed`;
/// failures are recorded in the report and do not stop the run.
pub fn run_replicates(spec: &ExperimentSpec, settings: &FitSettings, exec: Execution) -> Result<ReplicateReport> {
    spec.validate()?;
    settings.hp.validate()?;
    settings.controls.validate()?;
    SelectionRule::Bfdr { alpha: settings.alpha }.validate()?;
    if settings.hp.basis.n_basis != spec.p {
        return Err(Error::InvalidSpec(format!(
            "fit basis has {} functions but the experiment uses p = {}",
            settings.hp.basis.n_basis, spec.p
        )));
    }
    let rows = parallel::map_indexed(spec.n_replicates, exec, |k| {
        score(spec, settings, k).unwrap_or_else(|e| ReplicateMetrics {
            replicate: k,
            shd_median_rule: None,
            shd_bfdr_rule: None,
            kl: None,
            rmse: None,
            runtime_s: 0.0,
            error: Some(e.to_string()),
        })
    });
    Ok(ReplicateReport {
        spec: spec.clone(),
        rows,
    })
}

/// Default fit settings for an experiment: the generating G-Wishart prior,
/// a uniform graph prior and the documented scalar defaults.
pub fn default_settings(spec: &ExperimentSpec, controls: SamplerControls) -> Result<FitSettings> {
    let basis = spec.basis()?;
    let mut hp = Hyperparameters::with_defaults(basis, graph::GraphPrior::Uniform)?;
    hp.gw_prior = spec.gw_params()?;
    Ok(FitSettings {
        hp,
        controls,
        alpha: posterior::DEFAULT_BFDR_ALPHA,
    })
}

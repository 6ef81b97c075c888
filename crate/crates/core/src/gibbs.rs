//! Gibbs sweeps over `(beta, mu, tau2)` followed by one birth-death jump of
//! `(G, Omega)`, and the weighted chain they produce.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::bdmcmc::{BdState, BirthDeath, BirthProposal, PriorConstants, DEFAULT_MAX_RATE};
use crate::bspline::{BasisSpec, DesignMatrix};
use crate::dataset::SpectraDataset;
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphPrior};
use crate::gwishart::{self, GWishartParams, PrecisionMatrix};
use crate::linalg::{self, Matrix, Vector};
use crate::parallel::{self, Execution};
use crate::rng;

pub const DEFAULT_SIGMA_MU2: f64 = 100.0;
pub const DEFAULT_A: f64 = 10.0;
pub const DEFAULT_B: f64 = 0.001;
pub const DEFAULT_THIN_OMEGA: usize = 10;

#[derive(Debug, Clone)]
pub struct Hyperparameters {
    pub basis: BasisSpec,
    pub gw_prior: GWishartParams,
    pub graph_prior: GraphPrior,
    pub sigma_mu2: f64,
    pub a: f64,
    pub b: f64,
}

impl Hyperparameters {
    /// `d = 3`, `D = I`, `sigma_mu2 = 100`, `a = 10`, `b = 0.001`.
    pub fn with_defaults(basis: BasisSpec, graph_prior: GraphPrior) -> Result<Self> {
        let gw_prior = GWishartParams::isotropic(3.0, 1.0, basis.n_basis)?;
        let hp = Hyperparameters {
            basis,
            gw_prior,
            graph_prior,
            sigma_mu2: DEFAULT_SIGMA_MU2,
            a: DEFAULT_A,
            b: DEFAULT_B,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        self.gw_prior.validate()?;
        if self.gw_prior.dim() != self.basis.n_basis {
            return Err(Error::InvalidSpec(format!(
                "G-Wishart scale is {0}x{0} but the basis has {1} functions",
                self.gw_prior.dim(),
                self.basis.n_basis
            )));
        }
        self.graph_prior.validate(Some(self.basis.n_basis))?;
        for (name, v) in [("sigma_mu2", self.sigma_mu2), ("a", self.a), ("b", self.b)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerControls {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin_omega: usize,
    pub prior_constants: PriorConstants,
    pub proposal: BirthProposal,
    pub max_rate: f64,
    /// Keeps the graph fixed and redraws `Omega` from its conditional each
    /// sweep instead of running the birth-death step.
    #[serde(skip)]
    pub fixed_graph: Option<Graph>,
}

impl SamplerControls {
    pub fn new(n_iter: usize, burn_in: usize) -> Self {
        SamplerControls {
            n_iter,
            burn_in,
            thin_omega: DEFAULT_THIN_OMEGA,
            prior_constants: PriorConstants::Leading,
            proposal: BirthProposal::Conditional,
            max_rate: DEFAULT_MAX_RATE,
            fixed_graph: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::InvalidSpec(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if self.thin_omega == 0 {
            return Err(Error::InvalidSpec("thin must be at least 1".into()));
        }
        if !(self.max_rate > 1.0) {
            return Err(Error::InvalidSpec("max rate must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcState {
    /// Row `i` is `beta_i`.
    pub betas: Matrix,
    pub mu: Vector,
    pub tau2: f64,
    pub bd: BdState,
}

/// Data-dependent products reused by every sweep.
#[derive(Debug, Clone)]
pub struct Precomputed {
    phi: Matrix,
    ptp: Matrix,
    /// Column `i` is `Phi^T Y_i`.
    pty: Matrix,
    y: Matrix,
}

impl Precomputed {
    pub fn new(data: &SpectraDataset, design: &DesignMatrix) -> Result<Self> {
        if design.n_points() != data.n_points() {
            return Err(Error::Input(format!(
                "design has {} rows but curves have {} points",
                design.n_points(),
                data.n_points()
            )));
        }
        let phi = design.values.clone();
        let y = data.curves().clone();
        Ok(Precomputed {
            ptp: phi.transpose() * &phi,
            pty: phi.transpose() * y.transpose(),
            phi,
            y,
        })
    }

    pub fn n_curves(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_basis(&self) -> usize {
        self.phi.ncols()
    }

    /// `sum_i |Y_i - Phi beta_i|^2`.
    pub fn residual_ss(&self, betas: &Matrix) -> f64 {
        (&self.y - betas * self.phi.transpose()).norm_squared()
    }
}

/// `U = sum_i (beta_i - mu)(beta_i - mu)^T`.
pub fn scatter(betas: &Matrix, mu: &Vector) -> Matrix {
    let mut c = betas.clone();
    for mut row in c.row_iter_mut() {
        row -= mu.transpose();
    }
    c.transpose() * c
}

fn draw_betas<R: Rng + ?Sized>(pre: &Precomputed, state: &mut McmcState, rng: &mut R) -> Result<()> {
    let p = pre.n_basis();
    let n = pre.n_curves();
    let omega = state.bd.omega.values();
    let q = &pre.ptp / state.tau2 + omega;
    let chol = linalg::cholesky(&q, "coefficient posterior precision")?;
    let omega_mu = omega * &state.mu;
    let mut linear = &pre.pty / state.tau2;
    for mut col in linear.column_iter_mut() {
        col += &omega_mu;
    }
    let means = chol.solve(&linear);
    let z = Matrix::from_iterator(p, n, (0..p * n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numeric("singular coefficient precision".into()))?;
    state.betas = (means + noise).transpose();
    Ok(())
}

fn draw_mu<R: Rng + ?Sized>(state: &mut McmcState, sigma_mu2: f64, rng: &mut R) -> Result<()> {
    let n = state.betas.nrows() as f64;
    let p = state.mu.len();
    let omega = state.bd.omega.values();
    let m = Matrix::identity(p, p) / sigma_mu2 + omega * n;
    let chol = linalg::cholesky(&m, "mean posterior precision")?;
    let sum: Vector = state.betas.row_sum().transpose();
    state.mu = linalg::sample_canonical_normal(&chol, &(omega * sum), rng);
    Ok(())
}

fn draw_tau2<R: Rng + ?Sized>(pre: &Precomputed, state: &mut McmcState, a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let ss = pre.residual_ss(&state.betas);
    let shape = 0.5 * ((pre.n_curves() * pre.n_points()) as f64 + a);
    let rate = 0.5 * (b + ss);
    let gamma = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numeric(format!("tau2 conditional: {e}")))?;
    let tau2 = 1.0 / gamma.sample(rng);
    if !(tau2 > 0.0) || !tau2.is_finite() {
        return Err(Error::Numeric(format!("tau2 draw {tau2} is not positive and finite")));
    }
    state.tau2 = tau2;
    Ok(ss)
}

/// Draws every `beta_i` from `N(B (Phi^T Y_i / tau2 + Omega mu), B)` with
/// `B = (Phi^T Phi / tau2 + Omega)^{-1}`.
pub fn update_betas<R: Rng + ?Sized>(
    state: &mut McmcState,
    data: &SpectraDataset,
    design: &DesignMatrix,
    rng: &mut R,
) -> Result<()> {
    draw_betas(&Precomputed::new(data, design)?, state, rng)
}

/// Draws `mu` from the Gaussian with precision `I/sigma_mu2 + n Omega` and
/// mean `M^{-1} Omega sum_i beta_i`.
pub fn update_mu<R: Rng + ?Sized>(state: &mut McmcState, sigma_mu2: f64, rng: &mut R) -> Result<()> {
    draw_mu(state, sigma_mu2, rng)
}

/// Draws `tau2` from `IG((nr + a)/2, (b + SS)/2)`.
pub fn update_tau2<R: Rng + ?Sized>(
    state: &mut McmcState,
    data: &SpectraDataset,
    design: &DesignMatrix,
    a: f64,
    b: f64,
    rng: &mut R,
) -> Result<()> {
    draw_tau2(&Precomputed::new(data, design)?, state, a, b, rng).map(|_| ())
}

/// `Omega` stored at one post-burn-in iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredOmega {
    pub iteration: usize,
    pub weight: f64,
    pub values: Matrix,
}

/// Post-burn-in output of one or more chains.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedChain {
    pub n_nodes: usize,
    pub iterations: Vec<usize>,
    pub graphs: Vec<Graph>,
    pub weights: Vec<f64>,
    pub omegas: Vec<StoredOmega>,
    pub tau2: Vec<f64>,
    pub log_post: Vec<f64>,
    /// Unweighted post-burn-in mean of the coefficients, rows per curve.
    pub beta_mean: Matrix,
    pub mu_mean: Vector,
}

impl WeightedChain {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn tau2_mean(&self) -> f64 {
        self.tau2.iter().sum::<f64>() / self.tau2.len() as f64
    }

    /// Concatenates chains; coefficient means are averaged by chain length.
    pub fn pool(chains: Vec<WeightedChain>) -> Result<WeightedChain> {
        let mut iter = chains.into_iter();
        let mut out = iter.next().ok_or_else(|| Error::EmptyChain("no chains to pool".into()))?;
        let mut total = out.len() as f64;
        out.beta_mean *= total;
        out.mu_mean *= total;
        for c in iter {
            if c.n_nodes != out.n_nodes || c.beta_mean.shape() != out.beta_mean.shape() {
                return Err(Error::Input("chains have different dimensions".into()));
            }
            let len = c.len() as f64;
            out.beta_mean += &c.beta_mean * len;
            out.mu_mean += &c.mu_mean * len;
            total += len;
            out.iterations.extend(c.iterations);
            out.graphs.extend(c.graphs);
            out.weights.extend(c.weights);
            out.omegas.extend(c.omegas);
            out.tau2.extend(c.tau2);
            out.log_post.extend(c.log_post);
        }
        out.beta_mean /= total;
        out.mu_mean /= total;
        Ok(out)
    }
}

/// One chain of the sampler with its cached data products.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    pre: Precomputed,
    hp: Hyperparameters,
    controls: SamplerControls,
    bd: BirthDeath,
}

impl GibbsSampler {
    pub fn new(
        data: &SpectraDataset,
        design: &DesignMatrix,
        hp: &Hyperparameters,
        controls: &SamplerControls,
    ) -> Result<Self> {
        hp.validate()?;
        controls.validate()?;
        if design.n_basis() != hp.basis.n_basis {
            return Err(Error::InvalidSpec("design and basis disagree on p".into()));
        }
        if let Some(g) = &controls.fixed_graph {
            if g.n_nodes() != hp.basis.n_basis {
                return Err(Error::InvalidSpec("fixed graph has the wrong number of nodes".into()));
            }
        }
        let mut bd = BirthDeath::new(
            hp.gw_prior.clone(),
            hp.graph_prior.clone(),
            controls.prior_constants,
            controls.proposal,
        )?;
        bd.max_rate = controls.max_rate;
        Ok(GibbsSampler {
            pre: Precomputed::new(data, design)?,
            hp: hp.clone(),
            controls: controls.clone(),
            bd,
        })
    }

    pub fn birth_death(&self) -> &BirthDeath {
        &self.bd
    }

    /// Ridge coefficients, their mean, the mean squared residual, the empty
    /// (or fixed) graph and `Omega = I`.
    pub fn initial_state(&self) -> Result<McmcState> {
        let p = self.pre.n_basis();
        let ridge = linalg::cholesky(&(&self.pre.ptp + Matrix::identity(p, p)), "ridge system")?;
        let betas = ridge.solve(&self.pre.pty).transpose();
        let mu: Vector = betas.row_mean().transpose();
        let ss = self.pre.residual_ss(&betas);
        let tau2 = (ss / (self.pre.n_curves() * self.pre.n_points()) as f64).max(1e-12);
        let omega = match &self.controls.fixed_graph {
            Some(g) => PrecisionMatrix::new(Matrix::identity(p, p), g.clone())?,
            None => PrecisionMatrix::identity(p),
        };
        Ok(McmcState {
            betas,
            mu,
            tau2,
            bd: BdState::new(omega),
        })
    }

    pub fn log_post_proxy(&self, tau2: f64, ss: f64) -> f64 {
        let nr = (self.pre.n_curves() * self.pre.n_points()) as f64;
        -0.5 * nr * tau2.ln() - 0.5 * ss / tau2
    }

    /// Posterior G-Wishart parameters given the current coefficients.
    pub fn gw_posterior(&self, state: &McmcState) -> GWishartParams {
        self.hp
            .gw_prior
            .posterior(state.betas.nrows(), &scatter(&state.betas, &state.mu))
    }

    /// Steps 1.1 to 1.3; returns the residual sum of squares used for `tau2`.
    pub fn update_parameters<R: Rng + ?Sized>(&self, state: &mut McmcState, rng: &mut R) -> Result<f64> {
        draw_betas(&self.pre, state, rng)?;
        draw_mu(state, self.hp.sigma_mu2, rng)?;
        draw_tau2(&self.pre, state, self.hp.a, self.hp.b, rng)
    }

    /// Step 2: returns the new `(G, Omega)` carrying the holding time of the
    /// state it replaced.
    pub fn update_graph<R: Rng + ?Sized>(&self, state: &McmcState, rng: &mut R) -> Result<BdState> {
        let post = self.gw_posterior(state);
        match &self.controls.fixed_graph {
            Some(g) => Ok(BdState {
                graph: g.clone(),
                omega: gwishart::sample_direct(&post, g, rng)?,
                weight: 1.0,
            }),
            None => self.bd.birth_death_step(&state.bd, &post, rng),
        }
    }

    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<WeightedChain> {
        let mut state = self.initial_state()?;
        self.run_from(&mut state, rng)
    }

    pub fn run_from<R: Rng + ?Sized>(&self, state: &mut McmcState, rng: &mut R) -> Result<WeightedChain> {
        let c = &self.controls;
        let kept = c.n_iter - c.burn_in;
        let p = self.pre.n_basis();
        let mut chain = WeightedChain {
            n_nodes: p,
            iterations: Vec::with_capacity(kept),
            graphs: Vec::with_capacity(kept),
            weights: Vec::with_capacity(kept),
            omegas: Vec::with_capacity(kept / c.thin_omega + 1),
            tau2: Vec::with_capacity(kept),
            log_post: Vec::with_capacity(kept),
            beta_mean: Matrix::zeros(self.pre.n_curves(), p),
            mu_mean: Vector::zeros(p),
        };
        for it in 0..c.n_iter {
            let mut step = || -> Result<(f64, BdState)> {
                let ss = self.update_parameters(state, rng)?;
                let next = self.update_graph(state, rng)?;
                Ok((ss, next))
            };
            let (ss, next) = step().map_err(|e| Error::AtIteration {
                iteration: it,
                source: Box::new(e),
            })?;
            if it >= c.burn_in {
                let t = it - c.burn_in;
                chain.iterations.push(it);
                chain.graphs.push(state.bd.graph.clone());
                chain.weights.push(next.weight);
                if t.is_multiple_of(c.thin_omega) {
                    chain.omegas.push(StoredOmega {
                        iteration: it,
                        weight: next.weight,
                        values: state.bd.omega.values().clone(),
                    });
                }
                chain.tau2.push(state.tau2);
                chain.log_post.push(self.log_post_proxy(state.tau2, ss));
                chain.beta_mean += &state.betas;
                chain.mu_mean += &state.mu;
            }
            state.bd = next;
        }
        chain.beta_mean /= kept as f64;
        chain.mu_mean /= kept as f64;
        Ok(chain)
    }
}

pub fn run_chain<R: Rng + ?Sized>(
    data: &SpectraDataset,
    design: &DesignMatrix,
    hp: &Hyperparameters,
    controls: &SamplerControls,
    rng: &mut R,
) -> Result<WeightedChain> {
    GibbsSampler::new(data, design, hp, controls)?.run(rng)
}

/// Independent chains on streams `0..n_chains` of `seed`, pooled.
pub fn run_chains(
    data: &SpectraDataset,
    design: &DesignMatrix,
    hp: &Hyperparameters,
    controls: &SamplerControls,
    seed: u64,
    n_chains: usize,
    exec: Execution,
) -> Result<WeightedChain> {
    if n_chains == 0 {
        return Err(Error::InvalidSpec("need at least one chain".into()));
    }
    let sampler = GibbsSampler::new(data, design, hp, controls)?;
    let chains = parallel::map_indexed(n_chains, exec, |c| {
        let mut r = rng::stream(seed, c as u64);
        sampler.clone().run(&mut r)
    });
    WeightedChain::pool(chains.into_iter().collect::<Result<Vec<_>>>()?)
}

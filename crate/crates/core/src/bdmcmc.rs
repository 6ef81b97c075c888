//! Continuous-time birth-death moves over `(G, Omega)`.
//!
//! Every absent edge is born and every present edge dies as an independent
//! Poisson process. The rates are built from the log odds of the edge being
//! present given the rest of the precision matrix. For an edge `(i, j)` with
//! `i < j` the pivot is node `j`: writing
//! `Omega = [[A, k], [k^T, omega_jj]]` with `k = Omega[-j, j]`, the move keeps
//! `A` and the Schur complement `omega_jj - k^T A^{-1} k` fixed and changes
//! only `x = omega_ij` (re-completing `omega_jj`). Along that fibre the target
//! density is Gaussian in `x`, so the enlarged state can be integrated out in
//! closed form: the log odds read
//!
//! ```text
//! log rho = log pi(G+e)/pi(G-e) + log I_{G-e}(d, D) - log I_{G+e}(d, D)
//!           + log sqrt(2 pi s^2) + m^2 / (2 s^2)
//! ```
//!
//! with `s^2 = 1/(D*_jj (A^{-1})_ii)` and
//! `m = -s^2 (D*_ij + D*_jj (A^{-1} k_0)_i)`, where `D* = D + U` and `k_0` is
//! `k` with its `i`-th entry zeroed. Births fire at `sqrt(rho)`, deaths at
//! `1/sqrt(rho)`, so the balance `rate(G -> G+e) / rate(G+e -> G) = rho` holds
//! for every pair. All `A^{-1}` quantities come from one inverse of `Omega`.
//!
//! After a jump `Omega` is either redrawn from its conditional on the new
//! graph, or moved along the same fibre: a birth draws `x ~ N(m, s^2)`, a
//! death sets `x = 0`. The local move makes the jump process exactly
//! stationary for `P(G, Omega | data)`; the redraw does not, since the rates
//! then depend on a precision matrix that is not carried between jumps.
//!
//! The fixed-proposal variant uses a `N(0, scale^2)` proposal for `x`, unit
//! birth rates and death rates equal to the density ratio times the proposal
//! density.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::{all_pairs, Edge, Graph, GraphPrior};
use crate::gwishart::{self, GWishartParams, PrecisionMatrix};
use crate::linalg::{self, Matrix};
use crate::parallel::Execution;
use crate::rng;

pub const DEFAULT_MAX_RATE: f64 = 1e10;

/// Graph and precision matrix of the jump process, plus the expected holding
/// time of the state it summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct BdState {
    pub graph: Graph,
    pub omega: PrecisionMatrix,
    pub weight: f64,
}

impl BdState {
    pub fn new(omega: PrecisionMatrix) -> Self {
        BdState {
            graph: omega.graph().clone(),
            omega,
            weight: f64::NAN,
        }
    }
}

/// Posterior G-Wishart parameters `(d + n, D + U)`.
pub type PosteriorGwParams = GWishartParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum BirthProposal {
    /// Rao-Blackwellised: the new element is integrated against its exact
    /// conditional; rates are `sqrt(rho)` and `1/sqrt(rho)`.
    #[default]
    Conditional,
    /// Fixed `N(0, scale^2)` proposal, unit birth rates.
    Gaussian { scale: f64 },
}

/// How the ratio of prior normalizing constants `I_{G-e}(d, D)/I_{G+e}(d, D)`
/// is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum PriorConstants {
    /// Closed-form leading term of the Cholesky-parameterised integral.
    #[default]
    Leading,
    /// Monte Carlo estimates cached per graph (small p only).
    MonteCarlo { n_samples: usize, seed: u64 },
}

/// Prior normalizing constants `log I_G(d, D)` and their one-edge ratios.
#[derive(Debug)]
pub struct PriorNormalizer {
    params: GWishartParams,
    mode: PriorConstants,
    log_t_diag: Vec<f64>,
    cache: Mutex<HashMap<Graph, f64>>,
}

impl Clone for PriorNormalizer {
    fn clone(&self) -> Self {
        PriorNormalizer {
            params: self.params.clone(),
            mode: self.mode,
            log_t_diag: self.log_t_diag.clone(),
            cache: Mutex::new(self.cache.lock().expect("cache lock").clone()),
        }
    }
}

impl PriorNormalizer {
    pub fn new(params: GWishartParams, mode: PriorConstants) -> Result<Self> {
        params.validate()?;
        if let PriorConstants::MonteCarlo { n_samples, .. } = mode {
            if params.dim() > gwishart::MAX_NORMCONST_NODES {
                return Err(Error::Unsupported(format!(
                    "Monte Carlo prior constants need p <= {}",
                    gwishart::MAX_NORMCONST_NODES
                )));
            }
            if n_samples < gwishart::MIN_NORMCONST_SAMPLES {
                return Err(Error::InvalidSpec(format!(
                    "Monte Carlo prior constants need at least {} samples",
                    gwishart::MIN_NORMCONST_SAMPLES
                )));
            }
        }
        let scale = linalg::spd_inverse(&params.inv_scale, "inverse scale matrix")?;
        let t = linalg::cholesky(&scale, "scale matrix")?.l().transpose();
        let log_t_diag = (0..params.dim()).map(|i| t[(i, i)].ln()).collect();
        Ok(PriorNormalizer {
            params,
            mode,
            log_t_diag,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &GWishartParams {
        &self.params
    }

    pub fn mode(&self) -> PriorConstants {
        self.mode
    }

    fn log_normconst(&self, g: &Graph, n_samples: usize, seed: u64) -> Result<f64> {
        if let Some(&v) = self.cache.lock().expect("cache lock").get(g) {
            return Ok(v);
        }
        let mut r = rng::stream(seed, g.edge_hash());
        let est = gwishart::log_normconst_mc(&self.params, g, n_samples, &mut r, Execution::Sequential)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(g.clone(), est.log_estimate);
        Ok(est.log_estimate)
    }

    /// `log I_{G+e}(d, D) - log I_G(d, D)` for `e` absent from `g`.
    pub fn log_ratio_add(&self, g: &Graph, e: Edge) -> Result<f64> {
        debug_assert!(!g.contains(e));
        match self.mode {
            PriorConstants::Leading => {
                let (i, j) = (e.lo(), e.hi());
                let upper = ((i + 1)..g.n_nodes()).filter(|&l| g.adjacent(i, l)).count();
                let k = self.params.shape + upper as f64;
                Ok(0.5 * std::f64::consts::LN_2 + ln_gamma(0.5 * (k + 1.0)) - ln_gamma(0.5 * k)
                    + self.log_t_diag[i]
                    + self.log_t_diag[j]
                    + 0.5 * (2.0 * std::f64::consts::PI).ln())
            }
            PriorConstants::MonteCarlo { n_samples, seed } => {
                let with = g.with_edge(e);
                Ok(self.log_normconst(&with, n_samples, seed)? - self.log_normconst(g, n_samples, seed)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRate {
    pub edge: Edge,
    /// `true` for a death (edge currently present).
    pub present: bool,
    pub log_rate: f64,
}

/// How `Omega` changes at a jump.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaUpdate {
    /// Fresh draw from `G-Wishart(d + n, D + U)` on the new graph.
    #[default]
    Refresh,
    /// Change only the jumping entry and its pivot diagonal.
    Local,
}

/// Birth-death move configuration shared across iterations of one chain.
#[derive(Debug, Clone)]
pub struct BirthDeath {
    pub graph_prior: GraphPrior,
    pub normalizer: PriorNormalizer,
    pub proposal: BirthProposal,
    pub max_rate: f64,
    pub omega_update: OmegaUpdate,
}

/// Quantities of the pivot decomposition for one edge.
struct Fibre {
    x: f64,
    a_ii: f64,
    a_k0_i: f64,
}

fn fibre(omega: &Matrix, sigma: &Matrix, e: Edge) -> Fibre {
    let (i, j) = (e.lo(), e.hi());
    let x = omega[(i, j)];
    let s_jj = sigma[(j, j)];
    let a_ii = sigma[(i, i)] - sigma[(i, j)] * sigma[(i, j)] / s_jj;
    let a_k_i = -sigma[(i, j)] / s_jj;
    Fibre {
        x,
        a_ii,
        a_k0_i: a_k_i - x * a_ii,
    }
}

impl BirthDeath {
    pub fn new(
        prior_gw: GWishartParams,
        graph_prior: GraphPrior,
        constants: PriorConstants,
        proposal: BirthProposal,
    ) -> Result<Self> {
        graph_prior.validate(Some(prior_gw.dim()))?;
        if let BirthProposal::Gaussian { scale } = proposal {
            if !(scale > 0.0) {
                return Err(Error::InvalidSpec(format!("proposal scale {scale} must be positive")));
            }
        }
        Ok(BirthDeath {
            graph_prior,
            normalizer: PriorNormalizer::new(prior_gw, constants)?,
            proposal,
            max_rate: DEFAULT_MAX_RATE,
            omega_update: OmegaUpdate::Refresh,
        })
    }

    pub fn prior_gw(&self) -> &GWishartParams {
        self.normalizer.params()
    }

    /// Log odds of `e` being present against absent, everything else fixed.
    fn log_odds(&self, g: &Graph, omega: &Matrix, sigma: &Matrix, post: &GWishartParams, e: Edge) -> Result<f64> {
        let (i, j) = (e.lo(), e.hi());
        let f = fibre(omega, sigma, e);
        let d = &post.inv_scale;
        let s2 = 1.0 / (d[(j, j)] * f.a_ii);
        let m = -s2 * (d[(i, j)] + d[(j, j)] * f.a_k0_i);
        let reduced = g.without_edge(e);
        let log_norm = -self.normalizer.log_ratio_add(&reduced, e)?;
        let log_graph = self.graph_prior.log_ratio_edge(e, false);
        Ok(log_graph + log_norm + 0.5 * (2.0 * std::f64::consts::PI * s2).ln() + 0.5 * m * m / s2)
    }

    /// Log death rate under the fixed Gaussian proposal.
    fn log_death_fixed(&self, g: &Graph, omega: &Matrix, sigma: &Matrix, post: &GWishartParams, e: Edge, scale: f64) -> Result<f64> {
        let (i, j) = (e.lo(), e.hi());
        let f = fibre(omega, sigma, e);
        let d = &post.inv_scale;
        let x = f.x;
        // log f(Omega_reduced) - log f(Omega); the determinant is unchanged
        let log_density = x * d[(i, j)] + 0.5 * d[(j, j)] * (2.0 * x * f.a_k0_i + x * x * f.a_ii);
        let log_q = -0.5 * (x / scale).powi(2) - (scale * (2.0 * std::f64::consts::PI).sqrt()).ln();
        let reduced = g.without_edge(e);
        let log_norm = self.normalizer.log_ratio_add(&reduced, e)?;
        let log_graph = self.graph_prior.log_ratio_edge(e, true);
        Ok(log_graph + log_norm + log_density + log_q)
    }

    /// Rates are kept within `[1 / max_rate, max_rate]`.
    fn cap(&self, log_rate: f64) -> f64 {
        let bound = self.max_rate.ln().abs();
        log_rate.clamp(-bound, bound)
    }

    fn rate_with_inverse(
        &self,
        state: &BdState,
        sigma: &Matrix,
        post: &GWishartParams,
        e: Edge,
    ) -> Result<EdgeRate> {
        let present = state.graph.contains(e);
        let omega = state.omega.values();
        let log_rate = match self.proposal {
            BirthProposal::Conditional => {
                let odds = self.log_odds(&state.graph, omega, sigma, post, e)?;
                if present {
                    -0.5 * odds
                } else {
                    0.5 * odds
                }
            }
            BirthProposal::Gaussian { scale } => {
                if present {
                    self.log_death_fixed(&state.graph, omega, sigma, post, e, scale)?
                } else {
                    0.0
                }
            }
        };
        if log_rate.is_nan() {
            return Err(Error::Numeric(format!("rate for edge {e} is NaN")));
        }
        Ok(EdgeRate {
            edge: e,
            present,
            log_rate: self.cap(log_rate),
        })
    }

    fn inverse(&self, state: &BdState) -> Result<Matrix> {
        linalg::spd_inverse(state.omega.values(), "precision matrix")
    }

    pub fn death_rate(&self, e: Edge, state: &BdState, post: &PosteriorGwParams) -> Result<f64> {
        if !state.graph.contains(e) {
            return Err(Error::Input(format!("edge {e} is not in the graph")));
        }
        let sigma = self.inverse(state)?;
        Ok(self.rate_with_inverse(state, &sigma, post, e)?.log_rate.exp())
    }

    pub fn birth_rate(&self, e: Edge, state: &BdState, post: &PosteriorGwParams) -> Result<f64> {
        if state.graph.contains(e) {
            return Err(Error::Input(format!("edge {e} is already in the graph")));
        }
        let sigma = self.inverse(state)?;
        Ok(self.rate_with_inverse(state, &sigma, post, e)?.log_rate.exp())
    }

    /// Birth rates of every absent pair and death rates of every present edge.
    pub fn rates(&self, state: &BdState, post: &PosteriorGwParams) -> Result<Vec<EdgeRate>> {
        let sigma = self.inverse(state)?;
        all_pairs(state.graph.n_nodes())
            .map(|e| self.rate_with_inverse(state, &sigma, post, e))
            .collect()
    }

    /// One jump: computes all rates, records the holding time of the current
    /// state, moves to a neighbouring graph with probability proportional to
    /// its rate and updates `Omega` as set by `omega_update`. The returned
    /// state carries the pre-jump weight.
    pub fn birth_death_step<R: Rng + ?Sized>(
        &self,
        state: &BdState,
        post: &PosteriorGwParams,
        rng: &mut R,
    ) -> Result<BdState> {
        let sigma = self.inverse(state)?;
        let rates: Vec<EdgeRate> = all_pairs(state.graph.n_nodes())
            .map(|e| self.rate_with_inverse(state, &sigma, post, e))
            .collect::<Result<_>>()?;
        let linear: Vec<f64> = rates.iter().map(|r| r.log_rate.exp()).collect();
        let total: f64 = linear.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numeric(format!("total jump rate is {total}")));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = rates.len() - 1;
        for (idx, r) in linear.iter().enumerate() {
            acc += r;
            if target < acc {
                chosen = idx;
                break;
            }
        }
        let event = rates[chosen];
        let graph = if event.present {
            state.graph.without_edge(event.edge)
        } else {
            state.graph.with_edge(event.edge)
        };
        let omega = match self.omega_update {
            OmegaUpdate::Refresh => gwishart::sample_direct(post, &graph, rng)?,
            OmegaUpdate::Local => {
                let values = self.local_move(state.omega.values(), &sigma, post, event, rng)?;
                PrecisionMatrix::new(values, graph.clone())?
            }
        };
        Ok(BdState {
            graph,
            omega,
            weight: 1.0 / total,
        })
    }

    fn local_move<R: Rng + ?Sized>(
        &self,
        omega: &Matrix,
        sigma: &Matrix,
        post: &GWishartParams,
        event: EdgeRate,
        rng: &mut R,
    ) -> Result<Matrix> {
        let (i, j) = (event.edge.lo(), event.edge.hi());
        let f = fibre(omega, sigma, event.edge);
        let new_x = if event.present {
            0.0
        } else {
            match self.proposal {
                BirthProposal::Conditional => {
                    let d = &post.inv_scale;
                    let s2 = 1.0 / (d[(j, j)] * f.a_ii);
                    let m = -s2 * (d[(i, j)] + d[(j, j)] * f.a_k0_i);
                    m + s2.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)
                }
                BirthProposal::Gaussian { scale } => scale * rng.sample::<f64, _>(rand_distr::StandardNormal),
            }
        };
        let mut values = omega.clone();
        values[(i, j)] = new_x;
        values[(j, i)] = new_x;
        values[(j, j)] += 2.0 * (new_x - f.x) * f.a_k0_i + (new_x * new_x - f.x * f.x) * f.a_ii;
        Ok(values)
    }

    /// Runs the jump process for `horizon` units of continuous time and
    /// returns the state occupied at that time.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        state: &BdState,
        post: &PosteriorGwParams,
        horizon: f64,
        rng: &mut R,
    ) -> Result<BdState> {
        let mut current = state.clone();
        let mut elapsed = 0.0;
        loop {
            let next = self.birth_death_step(&current, post, rng)?;
            let hold: f64 = rng.sample::<f64, _>(rand_distr::Exp1) * next.weight;
            elapsed += hold;
            if elapsed >= horizon {
                current.weight = next.weight;
                return Ok(current);
            }
            current = next;
        }
    }
}

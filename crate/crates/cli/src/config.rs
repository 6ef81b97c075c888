//! Run configuration: TOML file, seed override variable, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specgraph::bdmcmc::PriorConstants;
use specgraph::graph::GraphPrior;
use specgraph::posterior::SelectionRule;
use specgraph::simulation::{ExperimentKind, ExperimentSpec, RmseTarget};
use specgraph::{Error, Result};

pub const SEED_ENV: &str = "SPECGRAPH_SEED";

pub fn parse_graph_prior(s: &str) -> Result<GraphPrior> {
    let s = s.trim();
    if s == "uniform" {
        return Ok(GraphPrior::Uniform);
    }
    let theta = s
        .strip_prefix("bernoulli=")
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| Error::Config(format!("graph prior {s:?} is not 'uniform' or 'bernoulli=THETA'")))?;
    GraphPrior::bernoulli(theta).map_err(|e| Error::Config(e.to_string()))
}

pub fn parse_selection(s: &str) -> Result<SelectionRule> {
    let s = s.trim();
    let rule = match s {
        "median" => SelectionRule::Median,
        "bfdr" => SelectionRule::Bfdr { alpha: 0.05 },
        _ => {
            let alpha = s
                .strip_prefix("bfdr=")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("selection {s:?} is not 'median' or 'bfdr=ALPHA'")))?;
            SelectionRule::Bfdr { alpha }
        }
    };
    rule.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(rule)
}

pub fn parse_prior_constants(s: &str) -> Result<PriorConstants> {
    let s = s.trim();
    if s == "leading" {
        return Ok(PriorConstants::Leading);
    }
    let n = s
        .strip_prefix("mc=")
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| Error::Config(format!("prior constants {s:?} are not 'leading' or 'mc=SAMPLES'")))?;
    Ok(PriorConstants::MonteCarlo { n_samples: n, seed: 0 })
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Reads a TOML config, or the `config` object of a JSON run manifest.
fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(inner) = v.get_mut("config") {
            v = inner.take();
        }
        serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

macro_rules! overlay {
    ($dst:expr, $src:expr, [$($field:ident),*]) => {
        $( if let Some(v) = $src.$field.clone() { $dst.$field = v.into(); } )*
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub normalize_area: bool,
    pub label_column: Option<String>,
    pub label_value: Option<String>,
    pub p_basis: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub graph_prior: String,
    pub gw_d: f64,
    #[serde(rename = "gw_D_scale")]
    pub gw_d_scale: f64,
    pub sigma_mu2: f64,
    pub a: f64,
    pub b: f64,
    pub select: String,
    pub prior_constants: String,
    pub out: Option<PathBuf>,
    pub chains: usize,
    pub jobs: usize,
    pub save_omega: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            data: None,
            normalize_area: false,
            label_column: None,
            label_value: None,
            p_basis: 40,
            iters: 60_000,
            burnin: 10_000,
            thin: 10,
            seed: 1,
            graph_prior: "uniform".into(),
            gw_d: 3.0,
            gw_d_scale: 1.0,
            sigma_mu2: 100.0,
            a: 10.0,
            b: 0.001,
            select: "bfdr=0.05".into(),
            prior_constants: "leading".into(),
            out: None,
            chains: 1,
            jobs: 0,
            save_omega: true,
        }
    }
}

/// Flag values; `None` leaves the file value in place.
#[derive(Debug, Clone, Default)]
pub struct FitOverrides {
    pub data: Option<PathBuf>,
    pub normalize_area: Option<bool>,
    pub label_column: Option<String>,
    pub label_value: Option<String>,
    pub p_basis: Option<usize>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub graph_prior: Option<String>,
    pub gw_d: Option<f64>,
    pub gw_d_scale: Option<f64>,
    pub sigma_mu2: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub select: Option<String>,
    pub prior_constants: Option<String>,
    pub out: Option<PathBuf>,
    pub chains: Option<usize>,
    pub jobs: Option<usize>,
    pub save_omega: Option<bool>,
}

impl FitConfig {
    pub fn resolve(file: Option<&Path>, flags: &FitOverrides) -> Result<FitConfig> {
        let mut cfg: FitConfig = match file {
            Some(p) => read_config(p)?,
            None => FitConfig::default(),
        };
        if let Some(seed) = seed_from_env()? {
            cfg.seed = seed;
        }
        overlay!(cfg, flags, [
            normalize_area, p_basis, iters, burnin, thin, seed, graph_prior, gw_d, gw_d_scale,
            sigma_mu2, a, b, select, prior_constants, chains, jobs, save_omega
        ]);
        if flags.data.is_some() {
            cfg.data = flags.data.clone();
        }
        if flags.out.is_some() {
            cfg.out = flags.out.clone();
        }
        if flags.label_column.is_some() {
            cfg.label_column = flags.label_column.clone();
        }
        if flags.label_value.is_some() {
            cfg.label_value = flags.label_value.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_none() {
            return Err(Error::Config("no data file given (--data)".into()));
        }
        if self.out.is_none() {
            return Err(Error::Config("no output directory given (--out)".into()));
        }
        if self.label_column.is_some() != self.label_value.is_some() {
            return Err(Error::Config("label_column and label_value must be given together".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        parse_graph_prior(&self.graph_prior)?;
        parse_selection(&self.select)?;
        parse_prior_constants(&self.prior_constants)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// `1` (random graph), `2` (block graph) or `gp`.
    pub experiment: String,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub sparsity: Option<f64>,
    pub tau2: Option<f64>,
    pub block_sizes: Option<Vec<usize>>,
    pub freeze_truth: bool,
    pub rmse_target: Option<RmseTarget>,
    pub replicates: usize,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub graph_prior: String,
    pub gw_d: Option<f64>,
    #[serde(rename = "gw_D_scale")]
    pub gw_d_scale: Option<f64>,
    pub sigma_mu2: f64,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub out: Option<PathBuf>,
    pub jobs: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            experiment: "1".into(),
            p: None,
            n: None,
            r: None,
            sparsity: None,
            tau2: None,
            block_sizes: None,
            freeze_truth: false,
            rmse_target: None,
            replicates: 50,
            iters: 60_000,
            burnin: 10_000,
            thin: 10,
            seed: 1,
            graph_prior: "uniform".into(),
            gw_d: None,
            gw_d_scale: None,
            sigma_mu2: 100.0,
            a: 10.0,
            b: 0.001,
            alpha: 0.05,
            out: None,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOverrides {
    pub experiment: Option<String>,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub sparsity: Option<f64>,
    pub tau2: Option<f64>,
    pub replicates: Option<usize>,
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub graph_prior: Option<String>,
    pub gw_d: Option<f64>,
    pub gw_d_scale: Option<f64>,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub freeze_truth: Option<bool>,
}

impl SimulateConfig {
    pub fn resolve(file: Option<&Path>, flags: &SimulateOverrides) -> Result<SimulateConfig> {
        let mut cfg: SimulateConfig = match file {
            Some(p) => read_config(p)?,
            None => SimulateConfig::default(),
        };
        if let Some(seed) = seed_from_env()? {
            cfg.seed = seed;
        }
        overlay!(cfg, flags, [experiment, replicates, iters, burnin, thin, seed, graph_prior, alpha, jobs, freeze_truth]);
        for (dst, src) in [(&mut cfg.p, flags.p), (&mut cfg.n, flags.n), (&mut cfg.r, flags.r)] {
            if src.is_some() {
                *dst = src;
            }
        }
        for (dst, src) in [
            (&mut cfg.sparsity, flags.sparsity),
            (&mut cfg.tau2, flags.tau2),
            (&mut cfg.gw_d, flags.gw_d),
            (&mut cfg.gw_d_scale, flags.gw_d_scale),
        ] {
            if src.is_some() {
                *dst = src;
            }
        }
        if flags.out.is_some() {
            cfg.out = flags.out.clone();
        }
        if cfg.out.is_none() {
            return Err(Error::Config("no output directory given (--out)".into()));
        }
        parse_graph_prior(&cfg.graph_prior)?;
        SelectionRule::Bfdr { alpha: cfg.alpha }
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        cfg.experiment_spec()?;
        Ok(cfg)
    }

    /// Experiment defaults: p = 40, n = 200, tau2 = 0.01 and sparsity 0.3 for
    /// the graph experiments; p = 20, n = 200, r = 100 and tau2 = 1 for `gp`.
    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match self.experiment.as_str() {
            "1" => ExperimentSpec::nonstructured(
                self.p.unwrap_or(40),
                self.n.unwrap_or(200),
                self.sparsity.unwrap_or(0.3),
                self.tau2.unwrap_or(0.01),
            ),
            "2" => ExperimentSpec::clustered(
                self.p.unwrap_or(40),
                self.n.unwrap_or(200),
                self.sparsity.unwrap_or(0.3),
                self.tau2.unwrap_or(0.01),
            ),
            "gp" => ExperimentSpec::gp(
                self.p.unwrap_or(20),
                self.n.unwrap_or(200),
                self.r.unwrap_or(100),
                self.tau2.unwrap_or(1.0),
            ),
            other => return Err(Error::Config(format!("unknown experiment {other:?}; use 1, 2 or gp"))),
        };
        if let Some(r) = self.r {
            spec.r = r;
        }
        if let Some(b) = &self.block_sizes {
            spec.block_sizes = b.clone();
        }
        if let Some(d) = self.gw_d {
            spec.gw_d = d;
        }
        if let Some(c) = self.gw_d_scale {
            spec.gw_d_scale = c;
        }
        if let Some(t) = self.rmse_target {
            spec.rmse_target = t;
        }
        spec.freeze_truth = self.freeze_truth;
        spec.n_replicates = self.replicates;
        spec.seed = self.seed;
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        if spec.kind == ExperimentKind::GpMatern && self.sparsity.is_some() {
            return Err(Error::Config("sparsity does not apply to the gp experiment".into()));
        }
        Ok(spec)
    }
}

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use specgraph::bspline::{build_design, BasisSpec};
use specgraph::dataset::{load_spectra, LoadOptions};
use specgraph::gibbs::{self, Hyperparameters, SamplerControls};
use specgraph::gwishart::GWishartParams;
use specgraph::parallel::{self, Execution};
use specgraph::posterior::{self, SelectionRule};
use specgraph::simulation::{self, FitSettings};
use specgraph::{io, Error, Result};

use crate::config::{parse_graph_prior, parse_prior_constants, parse_selection, FitConfig, SimulateConfig};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("SPECGRAPH_GIT_DESCRIBE"));

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    n_nodes: usize,
    config: &'a C,
    iterations: usize,
    burn_in: usize,
    wall_time_s: f64,
}

fn selection_alpha(rule: SelectionRule) -> f64 {
    match rule {
        SelectionRule::Bfdr { alpha } => alpha,
        SelectionRule::Median => posterior::DEFAULT_BFDR_ALPHA,
    }
}

fn execution(jobs: usize) -> Execution {
    if jobs == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Everything `fit` needs, built and checked before any sampling.
struct FitPlan {
    data: specgraph::dataset::SpectraDataset,
    basis: BasisSpec,
    hp: Hyperparameters,
    controls: SamplerControls,
    rule: SelectionRule,
    out: PathBuf,
}

fn plan_fit(cfg: &FitConfig) -> Result<FitPlan> {
    cfg.validate()?;
    let options = LoadOptions {
        normalize_area: cfg.normalize_area,
        label_filter: cfg.label_column.clone().zip(cfg.label_value.clone()),
    };
    let data = load_spectra(cfg.data.as_deref().expect("validated"), &options)?;
    let grid = data.grid();
    let basis = BasisSpec::cubic(grid[0], grid[grid.len() - 1], cfg.p_basis)
        .map_err(|e| Error::Config(e.to_string()))?;
    let config_err = |e: Error| Error::Config(e.to_string());
    let hp = Hyperparameters {
        gw_prior: GWishartParams::isotropic(cfg.gw_d, cfg.gw_d_scale, cfg.p_basis).map_err(config_err)?,
        graph_prior: parse_graph_prior(&cfg.graph_prior)?,
        sigma_mu2: cfg.sigma_mu2,
        a: cfg.a,
        b: cfg.b,
        basis,
    };
    hp.validate().map_err(config_err)?;
    let mut controls = SamplerControls::new(cfg.iters, cfg.burnin);
    controls.thin_omega = cfg.thin;
    controls.prior_constants = match parse_prior_constants(&cfg.prior_constants)? {
        specgraph::bdmcmc::PriorConstants::MonteCarlo { n_samples, .. } => {
            specgraph::bdmcmc::PriorConstants::MonteCarlo { n_samples, seed: cfg.seed }
        }
        leading => leading,
    };
    controls.validate().map_err(config_err)?;
    specgraph::bdmcmc::PriorNormalizer::new(hp.gw_prior.clone(), controls.prior_constants).map_err(config_err)?;
    Ok(FitPlan {
        data,
        basis,
        hp,
        controls,
        rule: parse_selection(&cfg.select)?,
        out: cfg.out.clone().expect("validated"),
    })
}

/// Fits the model and writes summaries to `out`, traces to `out/chain`.
pub fn cmd_fit(cfg: &FitConfig) -> Result<()> {
    let start = Instant::now();
    let plan = plan_fit(cfg)?;
    let design = build_design(&plan.basis, plan.data.grid())?;
    let exec = execution(cfg.jobs);
    let chain = parallel::with_jobs(cfg.jobs, || {
        gibbs::run_chains(&plan.data, &design, &plan.hp, &plan.controls, cfg.seed, cfg.chains, exec)
    })?;
    let alpha = selection_alpha(plan.rule);
    let summary = posterior::summarize(&chain, alpha)?;
    io::write_fit_artifacts(&plan.out, &summary, &chain, &design, &plan.basis, alpha)?;
    let chain_dir = plan.out.join("chain");
    io::write_chain(&chain_dir, &chain, cfg.save_omega)?;
    let manifest = Manifest {
        command: "fit",
        version: VERSION,
        seed: cfg.seed,
        n_nodes: cfg.p_basis,
        config: cfg,
        iterations: cfg.iters,
        burn_in: cfg.burnin,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    io::write_json(&chain_dir.join("manifest.json"), &manifest)?;
    io::write_json(&plan.out.join("manifest.json"), &manifest)
}

/// Runs a replicate campaign and writes its report to `out`.
pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<()> {
    let start = Instant::now();
    let spec = cfg.experiment_spec()?;
    let config_err = |e: Error| Error::Config(e.to_string());
    let mut controls = SamplerControls::new(cfg.iters, cfg.burnin);
    controls.thin_omega = cfg.thin;
    controls.validate().map_err(config_err)?;
    let mut settings: FitSettings = simulation::default_settings(&spec, controls).map_err(config_err)?;
    settings.hp.graph_prior = parse_graph_prior(&cfg.graph_prior)?;
    settings.hp.sigma_mu2 = cfg.sigma_mu2;
    settings.hp.a = cfg.a;
    settings.hp.b = cfg.b;
    settings.alpha = cfg.alpha;
    settings.hp.validate().map_err(config_err)?;
    let out = cfg.out.clone().expect("validated");
    let report = parallel::with_jobs(cfg.jobs, || simulation::run_replicates(&spec, &settings, execution(cfg.jobs)))?;
    io::write_report(&out, &report)?;
    io::write_json(
        &out.join("manifest.json"),
        &Manifest {
            command: "simulate",
            version: VERSION,
            seed: cfg.seed,
            n_nodes: spec.p,
            config: cfg,
            iterations: cfg.iters,
            burn_in: cfg.burnin,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    )
}

fn chain_nodes(chain_dir: &Path) -> Result<usize> {
    let path = chain_dir.join("manifest.json");
    let text = io::read_file(&path)?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    v.get("n_nodes")
        .and_then(|n| n.as_u64())
        .map(|n| n as usize)
        .ok_or_else(|| Error::Input(format!("{} has no n_nodes", path.display())))
}

/// Recomputes edge probabilities and one selected graph from saved traces.
pub fn cmd_select(chain_dir: &Path, rule: SelectionRule, out: Option<&Path>) -> Result<()> {
    rule.validate().map_err(|e| Error::Config(e.to_string()))?;
    let p = chain_nodes(chain_dir)?;
    let chain = io::read_chain(chain_dir, p)?;
    let probs = posterior::edge_probs(&chain)?;
    let selected = posterior::select(&probs, rule)?;
    let out = out.unwrap_or(chain_dir);
    io::create_dir(out)?;
    io::write_file(&out.join("edge_probs.csv"), io::matrix_to_csv(probs.values()))?;
    io::write_selection(out, rule.name(), selection_alpha(rule), &selected)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use specgraph::Result;
use specgraph_cli::commands::{cmd_fit, cmd_select, cmd_simulate, VERSION};
use specgraph_cli::config::{parse_selection, FitConfig, FitOverrides, SimulateConfig, SimulateOverrides};
use specgraph_cli::{error_json, exit_code};

#[derive(Parser)]
#[command(name = "specgraph", version = VERSION, about = "Joint curve smoothing and coefficient graph learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a CSV of curves
    Fit(FitArgs),
    /// Run a simulation campaign
    Simulate(SimulateArgs),
    /// Recompute graph selection from a saved chain
    Select(SelectArgs),
}

#[derive(Args)]
struct FitArgs {
    /// TOML config (or a run manifest.json)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Wide CSV: first row grid, then one curve per row
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    normalize_area: bool,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    label_value: Option<String>,
    #[arg(long)]
    p_basis: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    /// Store every k-th precision matrix
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// uniform | bernoulli=THETA
    #[arg(long)]
    graph_prior: Option<String>,
    #[arg(long)]
    gw_d: Option<f64>,
    /// D = c I
    #[arg(long = "gw-D-scale")]
    gw_d_scale: Option<f64>,
    #[arg(long)]
    sigma_mu2: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// median | bfdr=ALPHA
    #[arg(long)]
    select: Option<String>,
    /// leading | mc=SAMPLES
    #[arg(long)]
    prior_constants: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    chains: Option<usize>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Skip the binary precision-matrix log
    #[arg(long)]
    no_omega_log: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// 1 | 2 | gp
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    graph_prior: Option<String>,
    #[arg(long)]
    gw_d: Option<f64>,
    #[arg(long = "gw-D-scale")]
    gw_d_scale: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Reuse one graph, precision and coefficient draw for all replicates
    #[arg(long)]
    freeze_truth: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SelectArgs {
    /// Chain directory written by `fit`
    #[arg(long)]
    chain: PathBuf,
    /// median | bfdr
    #[arg(long, default_value = "bfdr")]
    rule: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => {
            let flags = FitOverrides {
                data: a.data,
                normalize_area: a.normalize_area.then_some(true),
                label_column: a.label_column,
                label_value: a.label_value,
                p_basis: a.p_basis,
                iters: a.iters,
                burnin: a.burnin,
                thin: a.thin,
                seed: a.seed,
                graph_prior: a.graph_prior,
                gw_d: a.gw_d,
                gw_d_scale: a.gw_d_scale,
                sigma_mu2: a.sigma_mu2,
                a: a.a,
                b: a.b,
                select: a.select,
                prior_constants: a.prior_constants,
                out: a.out,
                chains: a.chains,
                jobs: a.jobs,
                save_omega: a.no_omega_log.then_some(false),
            };
            cmd_fit(&FitConfig::resolve(a.config.as_deref(), &flags)?)
        }
        Command::Simulate(a) => {
            let flags = SimulateOverrides {
                experiment: a.experiment,
                p: a.p,
                n: a.n,
                r: a.r,
                sparsity: a.sparsity,
                tau2: a.tau2,
                replicates: a.replicates,
                iters: a.iters,
                burnin: a.burnin,
                thin: a.thin,
                seed: a.seed,
                graph_prior: a.graph_prior,
                gw_d: a.gw_d,
                gw_d_scale: a.gw_d_scale,
                alpha: a.alpha,
                out: a.out,
                jobs: a.jobs,
                freeze_truth: a.freeze_truth.then_some(true),
            };
            cmd_simulate(&SimulateConfig::resolve(a.config.as_deref(), &flags)?)
        }
        Command::Select(a) => {
            let rule = match a.rule.as_str() {
                "median" => parse_selection("median")?,
                "bfdr" => parse_selection(&format!("bfdr={}", a.alpha))?,
                other => parse_selection(other)?,
            };
            cmd_select(&a.chain, rule, a.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = serde_json::json!({"error": "config", "exit_code": 2, "message": e.to_string()});
            eprintln!("{report}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

//! Command-line driver: closed-form theory tables, single-cell simulation,
//! full lambda sweeps, dataset ingest, and matrix factorization.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use c3bv::data::{parse_amazon_5core, parse_movielens, RatingTable};
use c3bv::dynamics::DynamicsConfig;
use c3bv::envgen::EnvironmentSpec;
use c3bv::export::{export_results, write_trace_csv};
use c3bv::nmf::{factorize_nmf, save_factors, NmfOptions};
use c3bv::prent::{
    expected_welfare_nonstrategic, expected_welfare_strategic, f_gap, lambda_non_lower,
    lambda_non_upper, lambda_str_upper, prob_trend, NoiseRealization, PreNtParams,
};
use c3bv::rng::mix_seed;
use c3bv::sweep::{run_cell, run_sweep, synthetic_default_grid, Mode, Objective, SweepSpec};
use c3bv::welfare::AttentionWeights;

#[derive(Parser)]
#[command(
    name = "c3bv",
    version,
    about = "Creator competition under ridge-regularized recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form quantities for the two-direction model over a lambda grid.
    Theory(TheoryArgs),
    /// Evaluate a single (lambda, mode) cell of an environment.
    Simulate(SimulateArgs),
    /// Sweep a lambda grid over mechanisms and export results.
    Sweep(SweepArgs),
    /// Convert a raw ratings dump into the canonical triple CSV.
    Ingest(IngestArgs),
    /// Factorize a ratings CSV into nonnegative user/item factors.
    Nmf(NmfArgs),
}

#[derive(Args)]
struct TheoryArgs {
    /// Trend-group size.
    #[arg(long, default_value_t = 9)]
    n_t: u32,
    /// Niche-group size.
    #[arg(long, default_value_t = 1)]
    n_n: u32,
    /// True user weight on the trend direction.
    #[arg(long, default_value_t = 0.8)]
    theta_t: f64,
    /// True user weight on the niche direction.
    #[arg(long, default_value_t = 0.6)]
    theta_n: f64,
    /// Half-width of the uniform rating noise.
    #[arg(long, default_value_t = 0.2)]
    e_bar: f64,
    /// Comma-separated lambda values (default 0,0.1,1,10,100).
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Monte Carlo draws per grid point.
    #[arg(long, default_value_t = 20000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Concentration exponent for the strategic threshold, in (0, 0.5).
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Environment description (JSON with a "kind" tag).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// "nonstrategic" or a mechanism id such as "exposure_topk".
    #[arg(long, default_value = "nonstrategic")]
    mode: String,
    /// Master seed; rating noise and creator updates derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Better-response step size in (0, 1].
    #[arg(long)]
    eta: Option<f64>,
    /// Number of update rounds.
    #[arg(long)]
    horizon: Option<usize>,
    /// Clamp negative estimate entries to zero before ranking.
    #[arg(long)]
    clamp: bool,
    /// Write a per-step utility trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file with an "environment" section and an optional "sweep" section.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated override of the lambda grid.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Mechanism id; repeat the flag to compare several (overrides the config).
    #[arg(long = "mechanism")]
    mechanisms: Vec<String>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Ranking depth override for the environment.
    #[arg(long)]
    k: Option<usize>,
    /// "user_welfare" or "nash_social_welfare".
    #[arg(long)]
    objective: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "sweep_out")]
    out: PathBuf,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IngestFormat {
    /// Tab-separated "user item rating timestamp" lines.
    Movielens,
    /// One JSON review object per line.
    Amazon,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: IngestFormat,
    /// Destination triple CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NmfArgs {
    /// Triple CSV produced by `ingest`.
    #[arg(long)]
    input: PathBuf,
    /// Directory for w.csv, h.csv, and manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    rank: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Stop when the relative objective change falls below this.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Theory(args) => run_theory(&args),
        Command::Simulate(args) => run_simulate(&args),
        Command::Sweep(args) => run_sweep_cmd(&args),
        Command::Ingest(args) => run_ingest(&args),
        Command::Nmf(args) => run_nmf(&args),
    }
}

fn run_theory(args: &TheoryArgs) -> anyhow::Result<()> {
    let p = PreNtParams::new(args.n_t, args.n_n, args.theta_t, args.theta_n, args.e_bar)?;
    let grid = args
        .lambda_grid
        .clone()
        .unwrap_or_else(synthetic_default_grid);
    let attention = AttentionWeights::log_discount(1)?;
    let u_weights = (args.theta_t, args.theta_n);

    let mut out: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };

    match lambda_non_lower(&p) {
        Ok(v) => writeln!(out, "# lambda_non_lower = {v}")?,
        Err(e) => writeln!(out, "# lambda_non_lower = n/a ({e})")?,
    }
    match lambda_non_upper(&p) {
        Ok(v) if v.is_infinite() => writeln!(out, "# lambda_non_upper = inf")?,
        Ok(v) => writeln!(out, "# lambda_non_upper = {v}")?,
        Err(e) => writeln!(out, "# lambda_non_upper = n/a ({e})")?,
    }
    match lambda_str_upper(&p, args.alpha) {
        Ok(Some(v)) => writeln!(out, "# lambda_str_upper(alpha={}) = {v}", args.alpha)?,
        Ok(None) => writeln!(
            out,
            "# lambda_str_upper(alpha={}) = n/a (threshold does not bind)",
            args.alpha
        )?,
        Err(e) => writeln!(out, "# lambda_str_upper(alpha={}) = n/a ({e})", args.alpha)?,
    }

    writeln!(
        out,
        "lambda,f_zero_noise,prob_trend,prob_trend_stderr,\
         welfare_nonstrategic,welfare_nonstrategic_stderr,\
         welfare_strategic,welfare_strategic_stderr"
    )?;
    for &lambda in &grid {
        let f0 = f_gap(lambda, &p, &NoiseRealization::zero());
        let pt = prob_trend(&p, lambda, args.samples, args.seed)?;
        let wn = expected_welfare_nonstrategic(
            lambda,
            &p,
            u_weights,
            &attention,
            args.samples,
            args.seed,
        )?;
        let ws = expected_welfare_strategic(lambda, &p, &attention, args.samples, args.seed)?;
        writeln!(
            out,
            "{lambda},{f0},{},{},{},{},{},{}",
            pt.mean, pt.stderr, wn.mean, wn.stderr, ws.mean, ws.stderr
        )?;
    }
    Ok(())
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let body =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&body).with_context(|| format!("parsing {}", path.display()))
}

fn run_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let env: EnvironmentSpec = load_json(&args.config)?;
    let base = env.build()?;
    let mode: Mode = args.mode.parse()?;
    let mut dynamics = DynamicsConfig::default();
    if let Some(eta) = args.eta {
        dynamics.eta = eta;
    }
    if let Some(horizon) = args.horizon {
        dynamics.horizon = horizon;
    }
    let noise_seed = mix_seed(&[args.seed, 1]);
    let dynamics_seed = mix_seed(&[args.seed, 2]);
    let cell = run_cell(
        &base,
        args.lambda,
        &mode,
        noise_seed,
        dynamics_seed,
        &dynamics,
        args.clamp,
        args.trace.is_some(),
    )?;
    if let (Some(path), Some(trace)) = (&args.trace, &cell.trace) {
        write_trace_csv(path, trace)?;
    }
    let report = serde_json::json!({
        "lambda": args.lambda,
        "mode": mode.to_string(),
        "welfare": cell.welfare,
        "nash_social_welfare": cell.nsw,
        "trace_steps": cell.trace.as_ref().map(Vec::len),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[derive(Deserialize)]
struct SweepConfigFile {
    environment: EnvironmentSpec,
    #[serde(default)]
    sweep: SweepSpec,
}

fn run_sweep_cmd(args: &SweepArgs) -> anyhow::Result<()> {
    let mut cfg: SweepConfigFile = load_json(&args.config)?;
    if let Some(grid) = &args.lambda_grid {
        cfg.sweep.lambda_grid = grid.clone();
    }
    if !args.mechanisms.is_empty() {
        cfg.sweep.mechanisms = args
            .mechanisms
            .iter()
            .map(|s| s.parse())
            .collect::<c3bv::Result<_>>()?;
    }
    if let Some(replicates) = args.replicates {
        cfg.sweep.replicates = replicates;
    }
    if let Some(seed) = args.seed {
        cfg.sweep.master_seed = seed;
    }
    if let Some(objective) = &args.objective {
        cfg.sweep.objective = objective.parse::<Objective>()?;
    }
    if let Some(k) = args.k {
        match &mut cfg.environment {
            EnvironmentSpec::Prent(c) => c.k = k,
            EnvironmentSpec::Synthetic(c) => c.k = k,
            EnvironmentSpec::Dataset(c) => c.k = k,
        }
    }
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let base = cfg.environment.build()?;
    let result = run_sweep(&cfg.sweep, &base)?;
    export_results(&result, &args.out)?;
    eprintln!(
        "wrote {} cells across {} modes to {}",
        result.cells.len(),
        result.optima.len(),
        args.out.display()
    );
    println!("{}", serde_json::to_string_pretty(&result.optima)?);
    Ok(())
}

fn run_ingest(args: &IngestArgs) -> anyhow::Result<()> {
    let table = match args.format {
        IngestFormat::Movielens => parse_movielens(&args.input)?,
        IngestFormat::Amazon => parse_amazon_5core(&args.input)?,
    };
    table.save_csv(&args.out)?;
    println!(
        "{} ratings from {} users on {} items -> {}",
        table.len(),
        table.num_users(),
        table.num_items(),
        args.out.display()
    );
    Ok(())
}

fn run_nmf(args: &NmfArgs) -> anyhow::Result<()> {
    let table = RatingTable::load_csv(&args.input)?;
    let opts = NmfOptions {
        rank: args.rank,
        max_iter: args.max_iter,
        tol: args.tol,
        seed: args.seed,
    };
    let factors = factorize_nmf(&table, &opts)?;
    save_factors(&factors, &args.out)?;
    println!(
        "rank {} factors after {} iterations (error {:.6}, converged: {}) -> {}",
        factors.rank,
        factors.iterations,
        factors.reconstruction_error,
        factors.converged,
        args.out.display()
    );
    Ok(())
}

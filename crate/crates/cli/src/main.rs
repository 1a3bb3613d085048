use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hmfolio::experiment::{DataSource, ExperimentSpec};
use hmfolio::{
    estimate_moments, save_moment_model, Algorithm, LambdaMode, ModelParams, SolverConfig,
    Termination,
};

/// Sparse higher-moment portfolio optimization.
#[derive(Parser)]
#[command(name = "hmfolio", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm on one data set and write its trace.
    Solve(SolveArgs),
    /// Run the repeated benchmark: all four methods from shared seeded
    /// starting points, with a per-algorithm summary.
    Bench(BenchArgs),
    /// Solve across a grid of penalty values and report sparsity per rho.
    SweepRho(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// CSV return panel (header row, then one row per period).
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,

    /// Generate a synthetic panel instead: "N,T" (assets, periods). The
    /// panel derives from --seed.
    #[arg(long, value_name = "N,T")]
    synthetic: Option<String>,

    /// Key-value config file supplying defaults for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Algorithm: pdca, pdcae, sca, or relax_project.
    #[arg(long)]
    algo: Option<Algorithm>,

    /// Risk aversion parameter; sets the four moment weights.
    #[arg(long, conflicts_with = "lambdas")]
    xi: Option<f64>,

    /// Explicit moment weights "l1,l2,l3,l4".
    #[arg(long, value_name = "L1,L2,L3,L4")]
    lambdas: Option<String>,

    /// Box bound on each weight.
    #[arg(long)]
    alpha: Option<f64>,

    /// Cardinality target.
    #[arg(long)]
    k: Option<usize>,

    /// Sparsity penalty coefficient.
    #[arg(long)]
    rho: Option<f64>,

    /// Termination tolerance.
    #[arg(long)]
    eps: Option<f64>,

    /// Outer iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,

    /// Seed for the synthetic panel and the starting points.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for traces and summaries.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Also write the estimated moment model to this file.
    #[arg(long)]
    dump_moments: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Number of seeded repetitions.
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Comma-separated penalty grid.
    #[arg(long, value_name = "R1,R2,...", default_value = "0,1e-4,4e-4,1e-3,2e-3,4e-3,1e-2,4e-2")]
    rho_grid: String,
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        bail!("expected \"N,T\", got {s:?}");
    }
    Ok((
        parts[0].trim().parse().context("bad asset count")?,
        parts[1].trim().parse().context("bad period count")?,
    ))
}

fn parse_lambdas(s: &str) -> Result<[f64; 4]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        bail!("expected four comma-separated moment weights, got {s:?}");
    }
    let mut out = [0.0; 4];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p.trim().parse().with_context(|| format!("bad weight {p:?}"))?;
    }
    Ok(out)
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad rho {p:?}")))
        .collect()
}

/// Resolve the solver configuration: config file values first, then
/// explicit flags on top, then built-in defaults for the rest.
fn resolve_config(common: &CommonArgs) -> Result<SolverConfig> {
    let base = match &common.config {
        Some(path) => Some(
            hmfolio::load_solver_config(path)
                .with_context(|| format!("loading config {}", path.display()))?,
        ),
        None => None,
    };

    let algorithm = common
        .algo
        .or(base.as_ref().map(|b| b.algorithm))
        .unwrap_or(Algorithm::Sca);

    let lambda_mode = if let Some(xi) = common.xi {
        LambdaMode::RiskAversion(xi)
    } else if let Some(ls) = &common.lambdas {
        LambdaMode::Explicit(parse_lambdas(ls)?)
    } else if let Some(b) = &base {
        b.lambda_mode.clone()
    } else {
        LambdaMode::RiskAversion(10.0)
    };

    let mut config = base.unwrap_or_else(|| SolverConfig::default_for(algorithm, lambda_mode.clone()));
    config.algorithm = algorithm;
    config.lambda_mode = lambda_mode;
    if common.algo.is_some() && common.max_iters.is_none() && common.config.is_none() {
        config.max_iters = algorithm.default_max_iters();
    }
    if let Some(v) = common.alpha {
        config.alpha = v;
    }
    if let Some(v) = common.k {
        config.k = v;
    }
    if let Some(v) = common.rho {
        config.rho = v;
    }
    if let Some(v) = common.eps {
        config.epsilon = v;
    }
    if let Some(v) = common.max_iters {
        config.max_iters = v;
    }
    if let Some(v) = common.seed {
        config.seed = v;
    }
    Ok(config)
}

fn resolve_data(common: &CommonArgs, config: &SolverConfig) -> Result<DataSource> {
    match (&common.data, &common.synthetic) {
        (Some(path), None) => Ok(DataSource::File(path.clone())),
        (None, Some(spec)) => {
            let (n, t) = parse_pair(spec)?;
            Ok(DataSource::Synthetic { n_assets: n, n_periods: t, seed: config.seed })
        }
        _ => bail!("exactly one of --data and --synthetic is required"),
    }
}

fn build_spec(common: &CommonArgs, repetitions: usize) -> Result<ExperimentSpec> {
    let config = resolve_config(common)?;
    let data = resolve_data(common, &config)?;
    Ok(ExperimentSpec { data, config, repetitions, out_dir: common.out.clone() })
}

fn run_solve(args: &SolveArgs) -> Result<bool> {
    let spec = build_spec(&args.common, 1)?;
    let panel = spec.load_panel()?;
    let model = estimate_moments(&panel)?;
    if let Some(path) = &args.dump_moments {
        save_moment_model(&model, path)?;
        println!("moments written to {}", path.display());
    }
    let config = &spec.config;
    let params = ModelParams::from_config(config, &model)?;
    let w0 = hmfolio::build_feasible_init(model.n_assets(), config.alpha, config.seed)?;
    let report = hmfolio::experiment::run_single(config.algorithm, &model, &params, config, &w0)?;

    std::fs::create_dir_all(&spec.out_dir)?;
    let trace_path = spec.out_dir.join(format!("trace_{}.csv", config.algorithm.name()));
    hmfolio::write_trace(&report, &trace_path)?;

    let met = report.termination == Termination::ToleranceMet;
    println!(
        "{}: iterations={} f={:.6e} f_p={:.6e} support={} seconds={:.3} converged={}",
        config.algorithm,
        report.iterations(),
        report.f_final,
        report.fp_final,
        report.support_count,
        report.wall_time(),
        met
    );
    println!("trace written to {}", trace_path.display());
    Ok(met)
}

fn run_bench(args: &BenchArgs) -> Result<bool> {
    let spec = build_spec(&args.common, args.reps)?;
    let report = hmfolio::run_experiment(&spec)?;
    println!("{}", hmfolio::experiment::SUMMARY_HEADER);
    for row in &report.rows {
        println!(
            "{},{:.6e},{:.6e},{:.3},{:.1},{:.1}",
            row.algorithm.name(),
            row.mean_f,
            row.mean_fp,
            row.mean_cpu_seconds,
            row.mean_iterations,
            row.mean_support_count
        );
    }
    println!("summary written to {}", report.summary_path.display());
    Ok(report.all_tolerance_met)
}

fn run_sweep(args: &SweepArgs) -> Result<bool> {
    let spec = build_spec(&args.common, 1)?;
    let grid = parse_grid(&args.rho_grid)?;
    let report = hmfolio::rho_sweep(&spec, &grid)?;
    println!("{}", hmfolio::experiment::SWEEP_HEADER);
    for row in &report.rows {
        println!(
            "{},{:.6e},{:.6e},{:.3e},{},{}",
            row.rho, row.f, row.fp, row.cardinality_gap, row.support_count, row.tolerance_met
        );
    }
    match report.best_rho {
        Some(rho) => println!("smallest rho reaching the cardinality target: {rho}"),
        None => println!("no grid rho reached the cardinality target"),
    }
    println!("sweep written to {}", report.sweep_path.display());
    Ok(report.rows.iter().all(|r| r.tolerance_met))
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Bench(args) => run_bench(args),
        Command::SweepRho(args) => run_sweep(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one run stopped before reaching tolerance");
            ExitCode::FAILURE
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

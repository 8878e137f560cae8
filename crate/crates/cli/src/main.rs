//! `isacfp` — benchmark CLI over the isac-fp library.
//!
//! Four subcommands: `run` (one algorithm, one scenario), `sweep` (vary one
//! scalar knob), `estimate` (DoA errors for saved beamformers), and `race`
//! (all requested algorithms under one wall-clock budget). Every command
//! reads a scenario from a JSON config (NetworkConfig field names,
//! snake_case) and writes machine-readable artifacts into `--out`.
//!
//! Exit codes: 0 on success, 2 for configuration/input problems, 3 when a
//! numerical procedure fails at runtime.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isac_fp::estimator::{self, GridSpec};
use isac_fp::fpcore::LambdaKind;
use isac_fp::harness::{self, EstimationRow, ExperimentSpec, SweepParam, SweepSpec};
use isac_fp::scenario::{self, NetworkConfig};
use isac_fp::seeding::{child_seed, rng_from_seed};
use isac_fp::solvers::{Algorithm, SolverOptions, StopReason};
use isac_fp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "isacfp",
    version,
    about = "Multi-cell ISAC beamforming benchmarks: solvers, sweeps, races, DoA estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm on a scenario; writes trace.csv, beamformers.json,
    /// positions.csv, and run.json
    Run(RunArgs),
    /// Sweep one scalar knob; writes tradeoff.csv (or <param>_sweep.csv)
    Sweep(SweepArgs),
    /// Estimate each BS's DoA from saved beamformers; writes
    /// estimation.json and estimation.csv
    Estimate(EstimateArgs),
    /// Race algorithms under a shared time limit; writes one trace per
    /// competitor and race.json
    Race(RaceArgs),
}

/// Solver flags shared by the subcommands that run solvers.
#[derive(Args)]
struct SolverFlags {
    /// Override the scenario seed from the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration cap
    #[arg(long)]
    max_iters: Option<usize>,
    /// Wall-clock budget for the update steps, seconds
    #[arg(long)]
    time_limit_s: Option<f64>,
    /// Relative objective-change stopping tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Curvature bound: max | trace | frobenius
    #[arg(long)]
    lambda_strategy: Option<LambdaKind>,
}

impl SolverFlags {
    fn apply(&self, cfg: &mut NetworkConfig, opts: &mut SolverOptions) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.max_iters {
            opts.max_iters = n;
        }
        if let Some(t) = self.time_limit_s {
            opts.time_limit_s = Some(t);
        }
        if let Some(t) = self.tol {
            opts.rel_tol = t;
        }
        if let Some(k) = self.lambda_strategy {
            opts.lambda_strategy.kind = k;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config JSON
    #[arg(long)]
    config: PathBuf,
    /// conventional | nonhomogeneous | fast
    #[arg(long)]
    algorithm: Algorithm,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario config JSON
    #[arg(long)]
    config: PathBuf,
    /// omega | beta | P_dbm | N_t
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated values to visit, in order
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Algorithms to run at each value (default: all three)
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Scenario config JSON
    #[arg(long)]
    config: PathBuf,
    /// Beamformer JSON produced by `run`
    #[arg(long)]
    beamformers: PathBuf,
    /// Row label for the error table (e.g. the algorithm that produced
    /// the beamformers)
    #[arg(long, default_value = "estimate")]
    label: String,
    /// Override the scenario seed from the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RaceArgs {
    /// Scenario config JSON
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated competitors, e.g. conventional,nonhomogeneous,fast
    #[arg(long, value_delimiter = ',', required = true)]
    algorithms: Vec<Algorithm>,
    /// Shared wall-clock budget per competitor, seconds
    #[arg(long)]
    time_limit_s: f64,
    /// Override the scenario seed from the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration cap per competitor
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative objective-change stopping tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Curvature bound: max | trace | frobenius
    #[arg(long)]
    lambda_strategy: Option<LambdaKind>,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Race(args) => cmd_race(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_config(path: &Path) -> Result<NetworkConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg: NetworkConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    let mut opts = SolverOptions {
        algorithm: args.algorithm,
        ..SolverOptions::default()
    };
    args.solver.apply(&mut cfg, &mut opts);

    fs::create_dir_all(&args.out)?;
    let (topo, ch) = scenario::build_instance(&cfg)?;
    let out = isac_fp::solvers::run(&ch, &cfg, &opts)?;

    harness::write_trace_csv(&out.trace, &args.out.join("trace.csv"))?;
    harness::save_beamformers(&out.beamformers, &args.out.join("beamformers.json"))?;
    harness::write_positions_csv(&topo, &args.out.join("positions.csv"))?;
    let report = serde_json::json!({
        "build_stamp": harness::build_stamp(),
        "config": cfg,
        "options": opts,
        "stop_reason": out.status,
        "limited": out.status != StopReason::Converged,
        "iterations": out.iterations,
        "wall_time_s": out.trace.last().map_or(0.0, |r| r.elapsed_s),
        "objective": out.objective,
        "artifacts": {
            "trace": "trace.csv",
            "beamformers": "beamformers.json",
            "positions": "positions.csv",
        },
    });
    fs::write(
        args.out.join("run.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    println!(
        "{}: stopped ({}) after {} iterations, objective {:.6e} -> {}",
        args.algorithm,
        out.status,
        out.iterations,
        out.objective.weighted_sum,
        args.out.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    let mut opts = SolverOptions::default();
    args.solver.apply(&mut cfg, &mut opts);

    let mut spec = ExperimentSpec::new(cfg, &args.out);
    spec.solver = opts;
    if let Some(algorithms) = args.algorithms {
        spec.algorithms = algorithms;
    }
    spec.sweep = Some(SweepSpec {
        parameter: args.param,
        values: args.values,
    });

    fs::create_dir_all(&args.out)?;
    let rows = harness::run_sweep(&spec)?;
    let file = if args.param == SweepParam::Omega {
        "tradeoff.csv".to_string()
    } else {
        format!("{}_sweep.csv", args.param)
    };
    harness::write_sweep_csv(args.param, &rows, &args.out.join(&file))?;
    println!("{} rows -> {}", rows.len(), args.out.join(&file).display());
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let w = harness::load_beamformers(&args.beamformers)?;
    w.check_shape(&cfg)?;
    let (_, ch) = scenario::build_instance(&cfg)?;

    // The echo symbols and noise derive from the scenario seed, so a fixed
    // (config, beamformers) pair always reproduces the same estimate.
    let mut rng = rng_from_seed(child_seed(cfg.seed, 0, "echo"));
    let obs = estimator::synthesize_echo(&ch, &w, &cfg, &mut rng)?;
    let report = estimator::estimate_theta(&obs, &ch, &cfg, &GridSpec::default())?;

    fs::create_dir_all(&args.out)?;
    fs::write(
        args.out.join("estimation.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;

    // Table rows: the supplied beamformers against the rough-prior baseline.
    let prior_sq: Vec<f64> = (0..cfg.num_cells)
        .map(|l| (ch.theta_rough[l] - ch.theta_true[l]).powi(2))
        .collect();
    let rows = vec![
        EstimationRow {
            algorithm: "rough_prior".into(),
            position: cfg.target_position_m,
            mse: prior_sq.iter().sum::<f64>() / prior_sq.len() as f64,
            maxse: prior_sq.iter().cloned().fold(0.0, f64::max),
        },
        EstimationRow {
            algorithm: args.label.clone(),
            position: cfg.target_position_m,
            mse: report.mean_sq_err,
            maxse: report.max_sq_err,
        },
    ];
    harness::write_estimation_csv(&rows, &args.out.join("estimation.csv"))?;
    println!(
        "{}: mse {:.3e} (prior {:.3e}) -> {}",
        args.label,
        report.mean_sq_err,
        rows[0].mse,
        args.out.display()
    );
    Ok(())
}

fn cmd_race(args: RaceArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    let mut opts = SolverOptions::default();
    let flags = SolverFlags {
        seed: args.seed,
        max_iters: args.max_iters,
        time_limit_s: None, // run_race installs the shared budget itself
        tol: args.tol,
        lambda_strategy: args.lambda_strategy,
    };
    flags.apply(&mut cfg, &mut opts);

    let mut spec = ExperimentSpec::new(cfg, &args.out);
    spec.solver = opts;
    spec.algorithms = args.algorithms;

    let report = harness::run_race(&spec, args.time_limit_s)?;
    for e in &report.entries {
        println!(
            "{}: objective {:.6e} in {} iterations ({:.3}s), {}",
            e.algorithm, e.final_objective, e.iterations, e.wall_time_s, e.stop_reason
        );
    }
    println!("-> {}", args.out.join("race.json").display());
    Ok(())
}

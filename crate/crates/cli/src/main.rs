//! `lrmc`: command-line front end for the matrix-completion library.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, malformed files,
//! invariant violations), 2 solver non-convergence in `fit`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lrmc_core::diagnostics::{diagnostics_report, DiagnosticsOptions};
use lrmc_core::estimator::{
    fit, resolve_lambda, LambdaRule, RegularizationSpec, SolverConfig, StepSize,
};
use lrmc_core::experiments::{calibrate_for_params, sweep, SweepAxis, TrialParams};
use lrmc_core::io;
use lrmc_core::lowerbound::{build_packing, check_packing_conditions, export_packing};
use lrmc_core::model::{
    generate_dataset, Dimensions, GroundTruth, NoiseKind, NoiseModel, SamplingDistribution,
    TruthKind,
};
use lrmc_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lrmc",
    about = "Nuclear-norm penalized matrix completion under non-uniform sampling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (and optionally the sampling
    /// distribution and ground-truth files).
    Generate(GenerateArgs),
    /// Fit the penalized estimator to an observation file.
    Fit(FitArgs),
    /// Compute the diagnostics report for a sampling distribution.
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo rate sweep.
    Sweep(SweepArgs),
    /// Build and verify a minimax packing.
    Lowerbound(LowerboundArgs),
    /// Calibrate the lambda-rule constant by Monte Carlo.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Laplace,
    Uniform,
}

impl From<NoiseArg> for NoiseKind {
    fn from(v: NoiseArg) -> Self {
        match v {
            NoiseArg::Gaussian => NoiseKind::Gaussian,
            NoiseArg::Laplace => NoiseKind::Laplace,
            NoiseArg::Uniform => NoiseKind::BoundedUniform,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TruthArg {
    RandomOrthonormal,
    SignSpread,
}

impl From<TruthArg> for TruthKind {
    fn from(v: TruthArg) -> Self {
        match v {
            TruthArg::RandomOrthonormal => TruthKind::RandomOrthonormal,
            TruthArg::SignSpread => TruthKind::SignSpread,
        }
    }
}

fn parse_pi_spec(spec: &str, dims: Dimensions) -> Result<SamplingDistribution> {
    if spec == "uniform" {
        return Ok(SamplingDistribution::uniform(dims));
    }
    if let Some(rest) = spec.strip_prefix("powerlaw:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameter(
                "powerlaw spec is powerlaw:ROW_EXP,COL_EXP,FLOOR_RATIO".into(),
            ));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number `{s}` in pi spec")))
        };
        return SamplingDistribution::power_law(dims, parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    }
    Err(Error::InvalidParameter(format!(
        "unknown pi spec `{spec}` (want uniform or powerlaw:...)"
    )))
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenerateArgs {
    /// Matrix shape as two integers.
    #[arg(long, num_args = 2, value_names = ["M1", "M2"])]
    dims: Vec<usize>,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    sigma: f64,
    /// Entry bound of the ground truth.
    #[arg(long)]
    a: f64,
    #[arg(long)]
    n: usize,
    /// `uniform` or `powerlaw:ROW_EXP,COL_EXP,FLOOR_RATIO`.
    #[arg(long, default_value = "uniform")]
    pi: String,
    #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
    noise: NoiseArg,
    #[arg(long, value_enum, default_value_t = TruthArg::RandomOrthonormal)]
    truth_kind: TruthArg,
    #[arg(long)]
    seed: u64,
    /// Observation file to write.
    #[arg(long)]
    out: PathBuf,
    /// Optionally write the sampling distribution here.
    #[arg(long)]
    pi_out: Option<PathBuf>,
    /// Optionally write the dense ground truth here.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

fn cmd_generate(args: &GenerateArgs) -> Result<ExitCode> {
    let dims = Dimensions::new(args.dims[0], args.dims[1])?;
    let pi = parse_pi_spec(&args.pi, dims)?;
    let truth = GroundTruth::generate(args.truth_kind.into(), dims, args.rank, args.a, args.seed)?;
    let noise = NoiseModel::new(args.noise.into(), args.sigma)?;
    let data = generate_dataset(&pi, &truth, &noise, args.n, args.seed)?;
    let config = json!({
        "command": "generate",
        "dims": [dims.m1(), dims.m2()],
        "rank": args.rank,
        "sigma": args.sigma,
        "a": args.a,
        "n": args.n,
        "pi": args.pi,
        "noise": NoiseKind::from(args.noise),
        "truth_kind": TruthKind::from(args.truth_kind),
        "seed": args.seed,
        "rng": lrmc_core::rng::RNG_ALGORITHM,
    });
    io::write_observations(&data, Some(&config), &args.out)?;
    if let Some(path) = &args.pi_out {
        io::write_distribution(&pi, Some(&config), path)?;
    }
    if let Some(path) = &args.truth_out {
        io::write_matrix_csv(truth.matrix(), Some(&config), path)?;
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Args)]
struct FitArgs {
    /// Observation file.
    #[arg(long)]
    data: PathBuf,
    /// Sampling distribution file.
    #[arg(long)]
    pi: PathBuf,
    /// Optional JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["explicit", "theorem", "optimal", "calibrated"])]
    lambda_mode: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Constant C for the theorem/optimal/calibrated rules.
    #[arg(long)]
    c: Option<f64>,
    /// Confidence parameter t for the theorem rule.
    #[arg(long)]
    t: Option<f64>,
    /// Noise scale entering the lambda formulas.
    #[arg(long)]
    sigma: Option<f64>,
    /// Entry bound entering the lambda formulas.
    #[arg(long)]
    a: Option<f64>,
    /// Noise kind (sets the psi exponent in the theorem rule).
    #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
    noise: NoiseArg,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    acceleration: Option<bool>,
    /// Estimate CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON fit report.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn cmd_fit(args: &FitArgs) -> Result<ExitCode> {
    let data = io::read_observations(&args.data)?;
    let pi = io::read_distribution(&args.pi)?;
    let file_cfg = match &args.config {
        Some(path) => Some(io::parse_fit_config(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let mode = args
        .lambda_mode
        .clone()
        .or_else(|| file_cfg.as_ref().map(|c| c.lambda_mode.clone()))
        .ok_or_else(|| Error::InvalidParameter("missing --lambda-mode (or config)".into()))?;
    let lambda = args.lambda.or(file_cfg.as_ref().and_then(|c| c.lambda));
    let c = args.c.or(file_cfg.as_ref().and_then(|c| c.c)).unwrap_or(1.0);
    let dims = data.dims();
    let m = dims.m_sum() as f64;
    let t = args
        .t
        .or(file_cfg.as_ref().and_then(|c| c.t))
        .unwrap_or_else(|| m.ln());
    // Scale parameters for the formula rules come from flags, falling back
    // to the dataset's provenance when it has one.
    let provenance_noise = data.provenance().map(|p| p.noise);
    let sigma = args
        .sigma
        .or(provenance_noise.map(|n| n.sigma))
        .unwrap_or(1.0);
    let a = args.a.unwrap_or(1.0);
    let noise = NoiseModel::new(args.noise.into(), sigma.max(0.0))?;

    let rule = match mode.as_str() {
        "explicit" => LambdaRule::Explicit {
            lambda: lambda.ok_or_else(|| {
                Error::InvalidParameter("explicit mode needs --lambda".into())
            })?,
        },
        "theorem" => LambdaRule::Theorem { c, t },
        "optimal" => LambdaRule::Optimal { c },
        "calibrated" => LambdaRule::Calibrated { c, t },
        _ => unreachable!("mode validated by clap"),
    };
    let reg: RegularizationSpec =
        resolve_lambda(rule, sigma, a, dims, data.n(), noise.psi_exponent())?;

    let mut solver = SolverConfig::default();
    if let Some(tol) = args.tolerance.or(file_cfg.as_ref().and_then(|c| c.tolerance)) {
        solver.relative_objective_tolerance = tol;
    }
    if let Some(iters) = args
        .max_iterations
        .or(file_cfg.as_ref().and_then(|c| c.max_iterations))
    {
        solver.max_iterations = iters;
    }
    if let Some(acc) = args
        .acceleration
        .or(file_cfg.as_ref().and_then(|c| c.acceleration))
    {
        solver.acceleration = acc;
    }
    solver.step_size = StepSize::Auto;

    let result = fit(&pi, &data, &reg, &solver)?;
    let config = json!({
        "command": "fit",
        "data": args.data.display().to_string(),
        "pi": args.pi.display().to_string(),
        "lambda_mode": mode,
        "resolved_lambda": reg.lambda,
        "c": c,
        "t": t,
        "sigma": sigma,
        "a": a,
        "solver": solver,
        "warning": reg.warning,
    });
    io::write_matrix_csv(&result.estimate, Some(&config), &args.out)?;
    if let Some(path) = &args.report {
        let report = json!({
            "config": config,
            "resolved_lambda": result.resolved_lambda,
            "converged": result.converged,
            "iterations_used": result.iterations_used,
            "final_objective": result.objective_trace.last(),
            "warnings": reg.warning.iter().collect::<Vec<_>>(),
        });
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if !result.converged {
        eprintln!(
            "fit did not converge within {} iterations (best iterate written)",
            solver.max_iterations
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    pi: PathBuf,
    /// Dense ground-truth CSV (enables projector-based diagnostics).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Observation file (enables the stochastic error norms).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    c0: f64,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 32)]
    restarts: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 3.0)]
    t: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<ExitCode> {
    let pi = io::read_distribution(&args.pi)?;
    let truth = match &args.truth {
        Some(path) => Some(GroundTruth::from_dense(&io::read_matrix_csv(path)?)?),
        None => None,
    };
    let data = match &args.data {
        Some(path) => Some(io::read_observations(path)?),
        None => None,
    };
    let opts = DiagnosticsOptions {
        c0: args.c0,
        alpha: args.alpha,
        rank: args.rank,
        restarts: args.restarts,
        samples: args.samples,
        t: args.t,
        bernstein_c: 1.0,
        seed: args.seed,
    };
    let report = diagnostics_report(&pi, truth.as_ref(), data.as_ref(), &opts)?;
    let config = json!({
        "command": "diagnose",
        "pi": args.pi.display().to_string(),
        "truth": args.truth.as_ref().map(|p| p.display().to_string()),
        "data": args.data.as_ref().map(|p| p.display().to_string()),
        "options": opts,
    });
    let out = json!({ "config": config, "report": report });
    std::fs::write(&args.out, serde_json::to_string_pretty(&out)?)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SweepArgs {
    /// Axis to sweep: n, M, r, or sigma.
    #[arg(long, value_parser = ["n", "M", "r", "sigma"])]
    axis: String,
    /// Comma-separated grid values.
    #[arg(long)]
    grid: String,
    /// Base instance family as a TrialParams JSON file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory: sweep.json, trials.csv, timing.log.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let base: TrialParams = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    let axis = match args.axis.as_str() {
        "n" => SweepAxis::N,
        "M" => SweepAxis::DimM,
        "r" => SweepAxis::Rank,
        "sigma" => SweepAxis::Sigma,
        _ => unreachable!("validated by clap"),
    };
    let grid: Vec<f64> = args
        .grid
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad grid value `{s}`")))
        })
        .collect::<Result<_>>()?;
    let run = sweep(axis, &grid, &base, args.trials, args.seed, args.threads)?;
    std::fs::create_dir_all(&args.out)?;
    // The thread count is a scheduling knob, not part of the experiment;
    // keeping it out of the outputs preserves byte-identity across pools.
    let config = json!({
        "command": "sweep",
        "axis": args.axis,
        "grid": grid,
        "trials": args.trials,
        "seed": args.seed,
        "base_params": base,
    });
    std::fs::write(
        args.out.join("sweep.json"),
        serde_json::to_string_pretty(&run.result)?,
    )?;
    std::fs::write(
        args.out.join("trials.csv"),
        lrmc_core::experiments::format_trials_csv(&run.records, &config),
    )?;
    std::fs::write(
        args.out.join("timing.log"),
        lrmc_core::experiments::format_timing_sidecar(&run.records),
    )?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// lowerbound
// ---------------------------------------------------------------------------

#[derive(Args)]
struct LowerboundArgs {
    #[arg(long, num_args = 2, value_names = ["M1", "M2"])]
    dims: Vec<usize>,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_attempts: usize,
    /// Output directory for member CSVs and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_lowerbound(args: &LowerboundArgs) -> Result<ExitCode> {
    let dims = Dimensions::new(args.dims[0], args.dims[1])?;
    let packing = build_packing(
        dims,
        args.rank,
        args.sigma,
        args.a,
        args.n,
        args.gamma,
        args.seed,
        args.max_attempts,
    )?;
    let pi = SamplingDistribution::uniform(dims);
    let report = check_packing_conditions(&packing, &pi, args.sigma, args.alpha)?;
    export_packing(&packing, &report, &args.out)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CalibrateArgs {
    /// Instance family as a TrialParams JSON file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    quantile: f64,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 3.0)]
    t: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<ExitCode> {
    let params: TrialParams = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    let cal = calibrate_for_params(&params, args.trials, args.quantile, args.t, args.seed)?;
    let out = json!({
        "config": {
            "command": "calibrate",
            "params": params,
            "quantile": args.quantile,
            "trials": args.trials,
            "t": args.t,
            "seed": args.seed,
        },
        "calibration": cal,
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&out)?)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Lowerbound(args) => cmd_lowerbound(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

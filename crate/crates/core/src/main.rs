//! fzzlab command-line entrypoint.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use fzzlab::closed::{
    area_law_alpha, gmc_moment_h, laplace_area, mot_variance, r_bar, selberg_rhs, u0_bar, u_fzz, u_mu_zero,
};
use fzzlab::conesim::PathConfig;
use fzzlab::gmc::{build_covariance, simulate_observables, LatticeSpec};
use fzzlab::verify::{cone_pool, run_suite_dumping, Suite, SuiteConfig, VerificationReport};
use fzzlab::{cone_geometry, Cosmology, Error, LcftParams};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "fzzlab")]
#[command(about = "closed forms, quadrature replays and Monte Carlo checks for the FZZ one-point function")]
struct Cli {
    /// Worker threads for the Monte Carlo pipelines. Defaults to the available parallelism.
    #[arg(long, global = true, env = "FZZLAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one closed-form expression
    Eval(EvalArgs),

    /// Run a verification suite and emit newline-delimited JSON reports
    Verify(VerifyArgs),

    /// Write raw samples as CSV with a JSON sidecar
    Dump(DumpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum Formula {
    UFzz,
    U0Bar,
    UMuZero,
    RBar,
    MotVariance,
    GmcMomentH,
    SelbergRhs,
    LaplaceArea,
    AreaLaw,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    formula: Formula,

    #[arg(long)]
    gamma: f64,

    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long, default_value_t = 1.0)]
    mu: f64,

    #[arg(long, default_value_t = 1.0)]
    mu_b: f64,

    /// Boundary length for laplace_area and area_law.
    #[arg(long, default_value_t = 1.0)]
    ell: f64,

    /// Number of insertions for selberg_rhs.
    #[arg(long, default_value_t = 1)]
    n: u32,

    /// laplace_area: divide by the total mass.
    #[arg(long)]
    normalized: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SuiteArg {
    Identities,
    Cone,
    Gmc,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Identities => Suite::Identities,
            SuiteArg::Cone => Suite::Cone,
            SuiteArg::Gmc => Suite::Gmc,
            SuiteArg::All => Suite::All,
        }
    }
}

/// Run parameters shared by `verify` and `dump`.
#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,

    #[arg(long, default_value_t = 2.0)]
    alpha: f64,

    #[arg(long, default_value_t = 1.0)]
    mu: f64,

    #[arg(long, default_value_t = 1.0)]
    mu_b: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Sample count for every Monte Carlo pipeline (overrides --paths and --draws).
    #[arg(long)]
    n: Option<usize>,

    /// Cone paths.
    #[arg(long, default_value_t = 100_000)]
    paths: usize,

    /// Lattice field draws.
    #[arg(long, default_value_t = 20_000)]
    draws: usize,

    /// Lattice preset: boundary-small, boundary-reference, bulk-small, bulk-reference.
    #[arg(long, default_value = "boundary-reference")]
    preset: String,

    /// Cone time step as a multiple of u^2 (reference 1e-5).
    #[arg(long)]
    dt_scale: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    suite: SuiteArg,

    #[command(flatten)]
    run: RunArgs,

    /// Tolerance override for one check, as CHECK=VALUE. Repeatable.
    #[arg(long = "tol", value_parser = parse_override)]
    tolerances: Vec<(String, f64)>,

    /// Report file; reports go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write the cone pool as CSV to this path.
    #[arg(long)]
    dump_cone: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DumpKind {
    Cone,
    Gmc,
}

#[derive(Debug, clap::Args)]
struct DumpArgs {
    kind: DumpKind,

    #[command(flatten)]
    run: RunArgs,

    /// CSV destination; the sidecar goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected CHECK=VALUE, got '{s}'"))?;
    let tol: f64 = value.parse().map_err(|e| format!("bad tolerance '{value}': {e}"))?;
    if !(tol > 0.0) {
        return Err(format!("tolerance must be positive, got {tol}"));
    }
    Ok((name.to_string(), tol))
}

/// Parsed configuration echoed into every report.
#[derive(Debug, Serialize)]
struct RunConfig {
    command: &'static str,
    target: Value,
    gamma: f64,
    alpha: f64,
    mu: f64,
    mu_b: f64,
    seed: u64,
    n_paths: usize,
    n_draws: usize,
    preset: String,
    lattice: LatticeSpec,
    path: Option<PathConfig>,
    tolerance_overrides: Vec<(String, f64)>,
    out: Option<PathBuf>,
    dump_cone: Option<PathBuf>,
    threads: usize,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Lib(#[from] Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Lib(Error::Io(_) | Error::Csv(_) | Error::Json(_)) => EXIT_IO,
            CliError::Lib(_) => EXIT_USAGE,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    let threads = rayon::current_num_threads();
    match cli.command {
        Command::Eval(args) => cmd_eval(&args),
        Command::Verify(args) => cmd_verify(&args, threads),
        Command::Dump(args) => cmd_dump(&args, threads),
    }
}

fn need_alpha(args: &EvalArgs) -> Result<f64, CliError> {
    args.alpha
        .ok_or_else(|| CliError::Usage(format!("{:?} needs --alpha", args.formula)))
}

fn cmd_eval(args: &EvalArgs) -> Result<u8, CliError> {
    let p = LcftParams::new(args.gamma)?;
    let mut diagnostics = json!({ "q": p.q(), "theta": p.theta() });
    let mut extra = Value::Null;
    let value = match args.formula {
        Formula::UFzz => {
            let alpha = need_alpha(args)?;
            let cosmo = Cosmology::new(&p, args.mu, args.mu_b)?;
            diagnostics["branch"] = json!(cosmo.branch());
            diagnostics["x"] = json!(cosmo.x_parameter(&p));
            diagnostics["length_exponent"] = json!(p.length_exponent(alpha));
            u_fzz(&p, alpha, &cosmo)?
        }
        Formula::U0Bar => {
            let alpha = need_alpha(args)?;
            let v = u0_bar(&p, alpha)?;
            diagnostics["pole"] = json!(v.is_infinite());
            v
        }
        Formula::UMuZero => u_mu_zero(&p, need_alpha(args)?, args.mu_b)?,
        Formula::RBar => r_bar(&p)?,
        Formula::MotVariance => mot_variance(&p),
        Formula::GmcMomentH => gmc_moment_h(&p, need_alpha(args)?)?,
        Formula::SelbergRhs => selberg_rhs(&p, args.n)?,
        Formula::LaplaceArea => laplace_area(&p, need_alpha(args)?, args.ell, args.mu, args.normalized)?,
        Formula::AreaLaw => {
            let law = area_law_alpha(&p, need_alpha(args)?)?.at_length(args.ell);
            extra = json!(law);
            law.to_inverse_gamma().reciprocal_mean()
        }
    };
    if args.formula == Formula::AreaLaw {
        println!("shape={} scale={}", extra["shape"], extra["scale"]);
        diagnostics["law"] = extra;
        diagnostics["value_is"] = json!("reciprocal_mean");
    } else {
        println!("{value}");
    }
    let line = json!({
        "formula": args.formula,
        "value": value,
        "params": {
            "gamma": args.gamma,
            "alpha": args.alpha,
            "mu": args.mu,
            "mu_b": args.mu_b,
            "ell": args.ell,
            "n": args.n,
            "normalized": args.normalized,
        },
        "diagnostics": diagnostics,
    });
    println!("{line}");
    Ok(0)
}

fn resolve(run: &RunArgs) -> Result<(LcftParams, LatticeSpec, Option<PathConfig>, usize, usize), CliError> {
    let p = LcftParams::new(run.gamma)?;
    let lattice = LatticeSpec::preset(&run.preset)?;
    let path = match run.dt_scale {
        Some(s) if !(s > 0.0) => return Err(CliError::Usage(format!("--dt-scale must be positive, got {s}"))),
        Some(s) => {
            let u = cone_geometry(&p, run.alpha)?.u;
            Some(PathConfig {
                dt: s * u * u,
                ..PathConfig::reference(u)
            })
        }
        None => None,
    };
    let n_paths = run.n.unwrap_or(run.paths);
    let n_draws = run.n.unwrap_or(run.draws);
    Ok((p, lattice, path, n_paths, n_draws))
}

fn echo(command: &'static str, target: Value, run: &RunArgs, threads: usize) -> Result<RunConfig, CliError> {
    let (_, lattice, path, n_paths, n_draws) = resolve(run)?;
    Ok(RunConfig {
        command,
        target,
        gamma: run.gamma,
        alpha: run.alpha,
        mu: run.mu,
        mu_b: run.mu_b,
        seed: run.seed,
        n_paths,
        n_draws,
        preset: run.preset.clone(),
        lattice,
        path,
        tolerance_overrides: Vec::new(),
        out: None,
        dump_cone: None,
        threads,
    })
}

fn apply_overrides(reports: Vec<VerificationReport>, overrides: &[(String, f64)]) -> Vec<VerificationReport> {
    reports
        .into_iter()
        .map(|r| match overrides.iter().rev().find(|(name, _)| *name == r.check) {
            Some(&(_, tol)) => r.with_tolerance(tol),
            None => r,
        })
        .collect()
}

fn cmd_verify(args: &VerifyArgs, threads: usize) -> Result<u8, CliError> {
    let run = &args.run;
    let (_, lattice, path, n_paths, n_draws) = resolve(run)?;
    let mut config = echo("verify", json!(args.suite), run, threads)?;
    config.tolerance_overrides = args.tolerances.clone();
    config.out = args.out.clone();
    config.dump_cone = args.dump_cone.clone();
    let suite_cfg = SuiteConfig {
        gamma: run.gamma,
        alpha: run.alpha,
        mu: run.mu,
        mu_b: run.mu_b,
        seed: run.seed,
        n_paths,
        n_draws,
        lattice,
        path,
    };
    let reports = run_suite_dumping(args.suite.into(), &suite_cfg, args.dump_cone.as_deref())?;
    let reports = apply_overrides(reports, &args.tolerances);
    let config = serde_json::to_value(&config).map_err(Error::from)?;

    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    let mut failed = 0;
    for r in &reports {
        if !r.passed() {
            failed += 1;
        }
        let mut line = serde_json::to_value(r).map_err(Error::from)?;
        line["config"] = config.clone();
        writeln!(sink, "{line}")?;
    }
    sink.flush()?;
    eprintln!("{} checks, {} failed", reports.len(), failed);
    Ok(if failed == 0 { 0 } else { EXIT_FAIL })
}

fn cmd_dump(args: &DumpArgs, threads: usize) -> Result<u8, CliError> {
    let run = &args.run;
    let (p, lattice, path, n_paths, n_draws) = resolve(run)?;
    let config = echo("dump", json!(args.kind), run, threads)?;
    let rows = match args.kind {
        DumpKind::Cone => {
            let pool = cone_pool(&p, run.alpha, n_paths, run.seed, path)?;
            pool.dump(&args.out)?;
            pool.samples.len()
        }
        DumpKind::Gmc => {
            let factor = build_covariance(&lattice)?;
            let set = simulate_observables(&factor, &p, run.alpha, n_draws, run.seed)?;
            set.dump(&args.out)?;
            set.draws.len()
        }
    };
    attach_config(&args.out, &config)?;
    eprintln!("wrote {rows} rows to {}", args.out.display());
    Ok(0)
}

/// Adds the run configuration to the sidecar written next to `csv`.
fn attach_config(csv: &Path, config: &RunConfig) -> Result<(), CliError> {
    let mut side = csv.as_os_str().to_owned();
    side.push(".json");
    let text = std::fs::read_to_string(&side)?;
    let mut v: Value = serde_json::from_str(&text).map_err(Error::from)?;
    v["run_config"] = serde_json::to_value(config).map_err(Error::from)?;
    std::fs::write(&side, serde_json::to_string_pretty(&v).map_err(Error::from)?)?;
    Ok(())
}

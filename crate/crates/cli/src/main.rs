mod config;
mod error;
mod figures;
mod jobs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use cascade_core::lindblad::ChannelKind;
use cascade_core::validation::{run_validation, ValidationOptions};
use clap::{Args, Parser, Subcommand};
use toml::{Table, Value};

use crate::config::{parse_assignment, resolve};
use crate::error::{CliError, Result, EXIT_INPUT};
use crate::figures::FigureName;
use crate::jobs::{execute, Job};
use crate::output::{Manifest, MANIFEST};

/// Cascaded Jaynes-Cummings source driving an external two-level atom.
#[derive(Parser)]
#[command(name = "cascade", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Incoherent spectrum of the forwards channel.
    Spectrum(RunArgs),
    /// Normalized squeezing spectrum and the sum rule of the forwards channel.
    Squeezing(RunArgs),
    /// Stationary intensity correlation of one output channel.
    G2 {
        #[arg(long, value_parser = parse_channel, default_value = "forwards")]
        channel: ChannelKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Stationary state summary and photon distribution.
    SteadyState(RunArgs),
    /// Mean-field (neoclassical) dynamics.
    Meanfield(RunArgs),
    /// Seeded quantum trajectories.
    Trajectory(RunArgs),
    /// Trajectories with phase-switching statistics.
    Bistability(RunArgs),
    /// Reproduce one figure with the caption parameters.
    Figure {
        #[arg(value_enum)]
        name: FigureName,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the oracle and invariant suite.
    Validate {
        /// Only the checks that finish quickly.
        #[arg(long)]
        fast: bool,
        /// Shrink every tolerance so that all checks fail (tests the exit path).
        #[arg(long)]
        inject_failure: bool,
    },
    /// Re-run a job from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with [params], [numerics] and [trajectory] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
    /// Override any key, e.g. `--set numerics.tau_max=20`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma_s: Option<f64>,
    #[arg(long)]
    eps_d: Option<f64>,
    #[arg(long)]
    focusing: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    n_fock: Option<usize>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
}

fn parse_channel(s: &str) -> std::result::Result<ChannelKind, String> {
    match s {
        "forwards" => Ok(ChannelKind::Forwards),
        "sideways" => Ok(ChannelKind::Sideways),
        "internal" => Ok(ChannelKind::Internal),
        _ => Err(format!("unknown channel `{s}` (forwards, sideways, internal)")),
    }
}

fn entry(section: &str, key: &str, value: Value) -> Table {
    let mut inner = Table::new();
    inner.insert(key.to_string(), value);
    let mut outer = Table::new();
    outer.insert(section.to_string(), Value::Table(inner));
    outer
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<Table>> {
        let mut out = Vec::new();
        let floats = [
            ("params", "g", self.g),
            ("params", "kappa", self.kappa),
            ("params", "gamma", self.gamma),
            ("params", "gamma_s", self.gamma_s),
            ("params", "eps_d", self.eps_d),
            ("params", "focusing", self.focusing),
            ("params", "eta", self.eta),
            ("params", "theta", self.theta),
            ("trajectory", "t_end", self.t_end),
            ("trajectory", "sample_dt", self.sample_dt),
        ];
        for (section, key, v) in floats {
            if let Some(v) = v {
                out.push(entry(section, key, Value::Float(v)));
            }
        }
        let ints = [
            ("numerics", "n_fock", self.n_fock.map(|v| v as u64)),
            ("trajectory", "seed", self.seed),
            ("trajectory", "ensemble", self.ensemble.map(|v| v as u64)),
        ];
        for (section, key, v) in ints {
            if let Some(v) = v {
                let v = i64::try_from(v).map_err(|_| CliError::Input(format!("{key} = {v} is too large")))?;
                out.push(entry(section, key, Value::Integer(v)));
            }
        }
        if let Some(s) = &self.scheme {
            out.push(entry("trajectory", "scheme", Value::String(s.clone())));
        }
        for s in &self.set {
            out.push(parse_assignment(s)?);
        }
        Ok(out)
    }
}

fn run_job(job: Job, args: &RunArgs) -> Result<()> {
    let cfg = resolve(&job.defaults(), args.config.as_deref(), args.overrides()?)?;
    let t0 = Instant::now();
    let m = execute(job, &cfg, &args.out)?;
    log::info!("wrote {} files to {} in {:.1?}", m.outputs.len() + 1, args.out.display(), t0.elapsed());
    println!("{}", args.out.join(MANIFEST).display());
    Ok(())
}

fn validate(fast: bool, inject_failure: bool) -> Result<()> {
    let opts = ValidationOptions { fast, tolerance_scale: if inject_failure { 1e-30 } else { 1.0 } };
    let outcomes = run_validation(&opts);
    for c in &outcomes {
        let status = if c.passed { "PASS" } else { "FAIL" };
        match &c.error {
            Some(e) => println!("{status} {}: error: {e}", c.name),
            None => println!("{status} {}: residual {:.3e} (tolerance {:.1e})", c.name, c.residual, c.tolerance),
        }
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        return Err(CliError::Validation(failed));
    }
    Ok(())
}

fn replay(manifest: &std::path::Path, out: &std::path::Path) -> Result<()> {
    let m = Manifest::read(manifest)?;
    if m.version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest written by version {}, replaying with {}", m.version, env!("CARGO_PKG_VERSION"));
    }
    m.config.validate()?;
    execute(m.job, &m.config, out)?;
    println!("{}", out.join(MANIFEST).display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectrum(a) => run_job(Job::Spectrum, &a),
        Command::Squeezing(a) => run_job(Job::Squeezing, &a),
        Command::G2 { channel, run } => run_job(Job::G2 { channel }, &run),
        Command::SteadyState(a) => run_job(Job::SteadyState, &a),
        Command::Meanfield(a) => run_job(Job::Meanfield, &a),
        Command::Trajectory(a) => run_job(Job::Trajectory, &a),
        Command::Bistability(a) => run_job(Job::Bistability, &a),
        Command::Figure { name, run } => run_job(Job::Figure { name }, &run),
        Command::Validate { fast, inject_failure } => validate(fast, inject_failure),
        Command::Replay { manifest, out } => replay(&manifest, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

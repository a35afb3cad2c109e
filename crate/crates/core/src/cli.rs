//! Command-line front end. Exit codes: 0 success, 1 a suite check failed,
//! 2 configuration or missing prerequisites, 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::driver::run_diagram;
use crate::error::Error;
use crate::suites::{run_evolve, run_suite, Report, Suite};

pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nlscont", version, about = "Bound-state continuation and bifurcation for 1D NLS")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration (defaults apply to missing fields).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true, env = "NLSCONT_OUT")]
    pub out: Option<PathBuf>,
    /// Seed of the random probe direction.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum number of branches in the diagram.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace the bifurcation diagram and write branches, events and summary.
    Diagram,
    /// Scaling ratios along the traced branches.
    Scaling,
    /// Time-evolution stability probes of tagged points.
    Probe,
    /// Constrained energy minimisers over a range of charges.
    Varscan,
    /// Rescaled large-E profiles and Morse-index predictions.
    Rescale,
    /// Evolve a stored profile and write its trajectory.
    Evolve {
        /// Two-column x,phi profile; defaults to a stable diagram point.
        #[arg(long, requires = "energy")]
        profile: Option<PathBuf>,
        /// E of the given profile.
        #[arg(long)]
        energy: Option<f64>,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

pub fn resolve_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(s) = common.seed {
        cfg.probes.seed = s;
    }
    if let Some(b) = common.budget {
        cfg.budget = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(r: &Report) {
    for c in &r.checks {
        println!("{} {} (value {:.6e}, threshold {:.3e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    for n in &r.notes {
        println!("note: {n}");
    }
}

fn run(cli: &Cli) -> Result<i32, Error> {
    let cfg = resolve_config(&cli.common)?;
    let dir: &Path = &cfg.output;
    let suite = |s: Suite| -> Result<i32, Error> {
        let r = run_suite(&cfg, dir, s)?;
        print_report(&r);
        Ok(if r.passed { 0 } else { EXIT_CHECK_FAILED })
    };
    match &cli.command {
        Command::Diagram => {
            let s = run_diagram(&cfg, dir)?;
            for b in &s.branches {
                println!(
                    "branch {:>2}  E {:.6}..{:.6}  points {:>4}  {:?}  events {:?}",
                    b.id, b.e_range.0, b.e_range.1, b.points, b.termination, b.events
                );
            }
            for f in &s.failures {
                eprintln!("warning: {f}");
            }
            println!("wrote {}", dir.display());
            Ok(0)
        }
        Command::Scaling => suite(Suite::Scaling),
        Command::Probe => suite(Suite::StabilityProbes),
        Command::Varscan => suite(Suite::VariationalScan),
        Command::Rescale => suite(Suite::Rescale),
        Command::Evolve { profile, energy } => {
            let given = profile.clone().zip(*energy);
            let out = run_evolve(&cfg, dir, given)?;
            println!("wrote {}", out.display());
            Ok(0)
        }
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

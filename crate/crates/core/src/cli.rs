//! Command-line front end.
//!
//! Exit codes: 0 success, 1 numerical failure (or a failed oracle), 2 usage
//! error. Failures print one JSON record to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiment::commands::{run_likelihood, run_reconstruct, run_sample};
use crate::experiment::config::RunConfig;
use crate::experiment::verify::{run_checks, IDENTITY_CHECKS, SLOW_CHECKS};
use crate::reconstruction::LikelihoodBackend;

#[derive(Debug, Parser)]
#[command(
    name = "pathinv",
    version,
    about = "Reconstruct 1-D potentials from thermal position data"
)]
struct Cli {
    /// Worker threads for path sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Classical, semiclassical and exact densities of the truth potential.
    Likelihood(RunArgs),
    /// Draw a dataset from the exact thermal density.
    Sample(RunArgs),
    /// Sample data and run the MAP descent.
    Reconstruct(RunArgs),
    /// Run the oracle suite and print a pass/fail table.
    Verify {
        /// Also run the slow density and reconstruction checks (minutes).
        #[arg(long)]
        all: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Backend {
    Classical,
    Semiclassical,
    Exact,
}

impl From<Backend> for LikelihoodBackend {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Classical => LikelihoodBackend::Classical,
            Backend::Semiclassical => LikelihoodBackend::Semiclassical,
            Backend::Exact => LikelihoodBackend::Exact,
        }
    }
}

fn load(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.sampling.seed = s;
    }
    if let Some(b) = args.backend {
        cfg.set_backend(b.into());
        cfg.reconstruction_config().validate()?;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

/// Result of a command: the text for stdout and whether it succeeded.
fn dispatch(command: &Command) -> Result<(String, bool)> {
    let report = |m: crate::experiment::output::RunManifest, out: PathBuf| {
        let mut s = format!(
            "{}: wrote {} files to {}\n",
            m.command,
            m.files.len() + 1,
            out.display()
        );
        for w in &m.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        (s, true)
    };
    match command {
        Command::Likelihood(a) => {
            let (cfg, out) = load(a)?;
            Ok(report(run_likelihood(&cfg, &out)?, out))
        }
        Command::Sample(a) => {
            let (cfg, out) = load(a)?;
            Ok(report(run_sample(&cfg, &out)?, out))
        }
        Command::Reconstruct(a) => {
            let (cfg, out) = load(a)?;
            Ok(report(run_reconstruct(&cfg, &out)?, out))
        }
        Command::Verify { all } => {
            let mut ids = IDENTITY_CHECKS.to_vec();
            if *all {
                ids.extend(SLOW_CHECKS);
                ids.sort_unstable();
            }
            let checks = run_checks(&ids);
            let mut s = String::new();
            for c in &checks {
                s.push_str(&c.line());
                s.push('\n');
            }
            let ok = checks.iter().all(|c| c.passed);
            s.push_str(&format!(
                "{} of {} checks passed\n",
                checks.iter().filter(|c| c.passed).count(),
                checks.len()
            ));
            Ok((s, ok))
        }
    }
}

fn error_record(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

/// Parses `args` (program name first) and runs the command; returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}", error_record(&Error::Config(format!("thread pool: {e}"))));
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok((text, ok)) => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

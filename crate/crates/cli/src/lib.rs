//! Command-line front end: config loading, preflight, solve and sweep runs.

pub mod config;
pub mod preflight;
pub mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::run::{execute, transform_table, RunOptions, RunSummary};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "quasisol", version, about = "Mountain-pass solver for quasilinear Schrodinger systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check hypotheses and penalization bounds without solving.
    Preflight { config: PathBuf },
    /// Solve each epsilon in turn, or only `--epsilon`.
    Solve {
        config: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the whole epsilon list in parallel and report trends.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print f, f' and f'' on a uniform grid as CSV.
    TransformTable {
        #[arg(long, allow_hyphen_values = true)]
        min: f64,
        #[arg(long, allow_hyphen_values = true)]
        max: f64,
        #[arg(long)]
        step: f64,
    },
}

fn print_summary(summary: &RunSummary) {
    for o in &summary.outcomes {
        println!(
            "eps={} status={:?} energy={:.9e} grad={:.3e} weak={:.3e} decay_r2={:.5} ok={}",
            o.epsilon,
            o.result.status,
            o.result.energy,
            o.result.grad_norm,
            o.report.weak_residual_max,
            o.report.decay_fit_r2,
            o.ok()
        );
        for flag in o.result.flags.iter().chain(&o.report.flags) {
            println!("  flag: {flag}");
        }
    }
    for (eps, msg) in &summary.failures {
        println!("eps={eps} error: {msg}");
    }
    if let Some(s) = &summary.sweep {
        println!(
            "trend: m_eps non-increasing={:?} norm ratio bounded={:?}",
            s.trend.non_increasing, s.norm_ratio_bounded
        );
    }
    println!("artifacts: {}", summary.output_dir.display());
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Preflight { config } => {
            let loaded = RunConfig::load(&config)?;
            let report = preflight::preflight(&loaded.config)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            for line in report.hard_failures.iter().chain(&report.soft_failures) {
                eprintln!("fail: {line}");
            }
            for line in &report.warnings {
                eprintln!("warning: {line}");
            }
            Ok(if report.pass { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Solve { config, epsilon, out } => {
            let loaded = RunConfig::load(&config)?;
            let options = RunOptions { epsilon, output_dir: out, parallel: false };
            let summary = execute(&loaded, &options)?;
            print_summary(&summary);
            Ok(if summary.success() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Sweep { config, out } => {
            let loaded = RunConfig::load(&config)?;
            let options = RunOptions { epsilon: None, output_dir: out, parallel: true };
            let summary = execute(&loaded, &options)?;
            print_summary(&summary);
            Ok(if summary.success() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::TransformTable { min, max, step } => {
            print!("{}", transform_table(min, max, step)?);
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs. Exit codes: 0 success, 1 a check failed, 2 error.
pub fn run_cli<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

//! `emel`: config-driven solves, diagnostics, and verification studies for
//! the 1-D electromagnetoelastic system on the torus.

mod config;
mod reconstruct;
mod run;
mod study;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or manifest (exit 2).
    Validation(String),
    /// Solver or I/O failure after validation (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "solver error: {m}"),
        }
    }
}

/// Map a core solver error to the runtime class.
pub fn solver_error(e: emel_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "emel", about = "Spectral solver and verification suite for 1-D electromagnetoelastic waves on the torus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write trajectory, energy ledger, diagnostics,
    /// and a self-contained run report.
    Run {
        /// Run configuration document (JSON).
        #[arg(long)]
        config: std::path::PathBuf,
        /// Parent directory of the content-addressed run directory.
        #[arg(long, default_value = "runs")]
        out: std::path::PathBuf,
    },
    /// Execute a verification study (convergence, stability, uniqueness,
    /// oracle) and write per-rung rows plus a pass/fail summary.
    Study {
        /// Study manifest document (JSON).
        #[arg(long)]
        manifest: std::path::PathBuf,
        #[arg(long, default_value = "studies")]
        out: std::path::PathBuf,
        /// Seed for manifests that reference randomized instances.
        #[arg(long, default_value_t = 2026)]
        seed: u64,
        /// Worker threads for independent rungs.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Synthesize plot-ready nodal fields from a trajectory CSV.
    Reconstruct {
        /// Trajectory CSV produced by `run`.
        #[arg(long)]
        trajectory: std::path::PathBuf,
        /// Comma-separated sample times.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// Number of uniform plot points per period.
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        /// Output CSV path (defaults to stdout).
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => run::cmd_run(&config, &out),
        Command::Study { manifest, out, seed, threads } => {
            study::cmd_study(&manifest, &out, seed, threads)
        }
        Command::Reconstruct { trajectory, times, resolution, out } => {
            reconstruct::cmd_reconstruct(&trajectory, &times, resolution, out.as_deref())
        }
    };
    let code = match outcome {
        Ok(true) => 0,
        Ok(false) => 1, // study assertions failed
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Validation(_) => 2,
                CliError::Runtime(_) => 3,
            }
        }
    };
    std::process::exit(code);
}

//! Library side of the `carelu` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 training
//! divergence, 4 gradient-check failure, 1 anything else.

pub mod commands;
pub mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{cmd_eval, cmd_gradcheck, cmd_inspect, cmd_train, EvalSummary, TrainSummary};
pub use config::{DataSource, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] carelu_core::Error),
    #[error("gradient check failed: {}", .0.join(", "))]
    GradcheckFailed(Vec<String>),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use carelu_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::GradcheckFailed(_) => 4,
            CliError::Internal(_) => 1,
            CliError::Core(e) => match e {
                E::Diverged { .. } => 3,
                E::InvalidState(_) => 1,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for carelu_core::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => carelu_core::Split::Train,
            SplitArg::Test => carelu_core::Split::Test,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "carelu", version, about = "Train, check and inspect CAReLU networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Print one line per epoch.
        #[arg(long)]
        verbose: bool,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// CSV file (label first) or JSON run config / data source.
        #[arg(long)]
        data: PathBuf,
        /// Split to take from a JSON source.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also write the metrics to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// Tolerance for component checks; the whole-network check uses ten times this.
        #[arg(long)]
        tol: Option<f64>,
        /// JSON battery config (points, seed, tol, network_tol, step, indicator_step).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "gradcheck.csv")]
        out: PathBuf,
    },
    /// Per-layer statistics of the CAS scale and histograms of α·p + β.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Output directory (created if missing).
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write every per-sample α·p + β.
        #[arg(long)]
        dump: bool,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, out, verbose } => {
            let s = cmd_train(&config, &out, verbose)?;
            println!(
                "trained {} epochs: train_acc {} test_acc {} (best epoch {}), outputs in {}",
                s.epochs,
                fmt_opt(Some(s.final_train_metric)),
                fmt_opt(s.final_test_metric),
                s.best_epoch,
                out.display()
            );
            Ok(())
        }
        Command::Eval { ckpt, data, split, out } => {
            let s = cmd_eval(&ckpt, &data, split.into(), out.as_deref())?;
            println!(
                "{}",
                serde_json::to_string(&s).map_err(|e| CliError::Internal(e.to_string()))?
            );
            Ok(())
        }
        Command::Gradcheck { tol, config, points, seed, out } => {
            let reports = cmd_gradcheck(config.as_deref(), tol, points, seed, &out)?;
            for r in &reports {
                println!(
                    "{:<32} {} max_rel_err {:.3e} max_abs_err {:.3e} ({} / {} over tol {:e})",
                    r.name,
                    if r.passed { "PASS" } else { "FAIL" },
                    r.max_rel_err,
                    r.max_abs_err,
                    r.failures,
                    r.coordinates,
                    r.tolerance
                );
            }
            let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::GradcheckFailed(failed))
            }
        }
        Command::Inspect { ckpt, data, split, out, dump } => {
            let layers = cmd_inspect(&ckpt, &data, split.into(), &out, dump)?;
            println!("layer  mean        std         n");
            for l in &layers {
                println!("{:<6} {:<11.8} {:<11.4e} {}", l.ordinal, l.mean, l.std, l.n);
            }
            Ok(())
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

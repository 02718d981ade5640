//! Command-line entry point for the behavior-calibration pipeline.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 external
//! service failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tircal::pipeline::config::PipelineConfig;
use tircal::pipeline::{
    cmd_analyze, cmd_flywheel, cmd_parse, cmd_report, cmd_sample, cmd_train, PipelineError,
};

#[derive(Parser)]
#[command(name = "tircal", version, about = "Behavior calibration for tool-integrated reasoning agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration file (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training / rollout seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file or run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for internal parallelism (reserved; stages run
    /// sequentially for bitwise reproducibility).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every trajectory in a JSON Lines dataset and report counts.
    Parse {
        input: PathBuf,
        /// Reject untagged text instead of promoting it to a think segment.
        #[arg(long)]
        strict_parse: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Compute the behavioral metric suite over a dataset.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the data flywheel and export the filtered SFT dataset.
    Flywheel {
        #[command(flatten)]
        common: Common,
    },
    /// Pareto-select question ids from a group-stats CSV.
    Sample {
        stats: PathBuf,
        /// Number of questions to keep.
        #[arg(long)]
        target: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run curriculum training on the simulated environment.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a completed training run directory.
    Report {
        run_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    match &common.config {
        Some(path) => Ok(PipelineConfig::load(path)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn require_out(common: &Common, what: &str) -> Result<PathBuf, PipelineError> {
    common
        .out
        .clone()
        .ok_or_else(|| PipelineError::Usage(format!("--out is required for {what}")))
}

fn run() -> Result<ExitCode, PipelineError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Parse { input, strict_parse, .. } => {
            let summary = cmd_parse(&input, strict_parse)?;
            println!(
                "ok {} tolerant {} failed {}",
                summary.ok,
                summary.tolerant,
                summary.failed.len()
            );
            for (line, idx, error) in &summary.failed {
                println!("line {line} trajectory {idx}: {error}");
            }
            if summary.failed.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Command::Analyze { input, common } => {
            let out = require_out(&common, "analyze")?;
            let metrics = cmd_analyze(&input, &out)?;
            for (name, value) in metrics {
                println!("{name} {value}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Flywheel { common } => {
            let cfg = load_config(&common)?;
            let out = require_out(&common, "flywheel")?;
            let summary = cmd_flywheel(&cfg, &out)?;
            println!(
                "questions {} pool {} kept {} exported {} failures {}",
                summary.questions,
                summary.pool_size,
                summary.kept_after_filter,
                summary.exported,
                summary.failures
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample { stats, target, common } => {
            let out = require_out(&common, "sample")?;
            let selected = cmd_sample(&stats, target, &out)?;
            println!("selected {} questions", selected.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let out = require_out(&common, "train")?;
            let report = cmd_train(&cfg, &out, common.seed)?;
            for row in &report.rounds {
                println!(
                    "round {} mean_reward {:.4} mean_tool_calls {:.4} accuracy {:.4} effi {:.4}",
                    row.round, row.mean_reward, row.mean_tool_calls, row.accuracy, row.effi
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run_dir, .. } => {
            print!("{}", cmd_report(&run_dir)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

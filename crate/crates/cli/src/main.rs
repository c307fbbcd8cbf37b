//! `jumplab`: the jump-prediction pipeline as manifest-tracked stages.
//!
//! Exit status 0 on success, 2 on a configuration error or manifest
//! mismatch, 3 on a data error.

mod config;
mod manifest;
mod report;
mod stages;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::{ConfigError, PipelineConfig};
use stages::{Stage, Status, run_stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Simulate,
    Ingest,
    Detect,
    Featurize,
    Assemble,
    Select,
    Train,
    Evaluate,
    Importance,
    Report,
    /// Every stage in dependency order.
    All,
}

#[derive(Debug, Parser)]
#[command(name = "jumplab", version, about = "Intraday jump detection and prediction pipeline")]
struct Cli {
    #[arg(value_enum)]
    stage: Command,
    /// Pipeline configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Model scope: comp, ind or both, overriding `model.scope`.
    #[arg(long)]
    scope: Option<String>,
    /// binary or trinary, overriding `model.problem`.
    #[arg(long)]
    problem: Option<String>,
    /// Detection significance level, overriding `detect.alpha`.
    #[arg(long)]
    alpha: Option<f64>,
    /// Rerun even when the manifest is up to date.
    #[arg(long)]
    force: bool,
}

fn stage_of(c: Command) -> Option<Stage> {
    Some(match c {
        Command::Simulate => Stage::Simulate,
        Command::Ingest => Stage::Ingest,
        Command::Detect => Stage::Detect,
        Command::Featurize => Stage::Featurize,
        Command::Assemble => Stage::Assemble,
        Command::Select => Stage::Select,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Importance => Stage::Importance,
        Command::Report => Stage::Report,
        Command::All => return None,
    })
}

fn load(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(s) = &cli.scope {
        cfg.set("model.scope", s)?;
    }
    if let Some(p) = &cli.problem {
        cfg.set("model.problem", p)?;
    }
    if let Some(a) = cli.alpha {
        if !(a > 0.0 && a < 1.0) {
            anyhow::bail!(ConfigError(format!("--alpha must lie in (0, 1), got {a}")));
        }
        cfg.set("detect.alpha", &a.to_string())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load(cli)?;
    let plan = match stage_of(cli.stage) {
        Some(s) => vec![s],
        None => Stage::pipeline(&cfg)?,
    };
    for stage in plan {
        match run_stage(stage, &cfg, cli.force)? {
            Status::UpToDate(_) => println!("{}: up to date", stage.name()),
            Status::Ran(m) => {
                let outs: Vec<String> = m.outputs.iter().map(|(n, o)| format!("{n} ({} rows)", o.rows)).collect();
                println!("{}: wrote {}", stage.name(), outs.join(", "));
            }
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|c| {
        c.is::<ConfigError>() || matches!(c.downcast_ref::<jumplab::Error>(), Some(jumplab::Error::InvalidConfig(_)))
    });
    if config { 2 } else { 3 }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `moments`: builds highlight-moment datasets and analyzes model outputs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
//! error. Failures print one JSON object to stderr.

// `!(x >= 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod cmd;
mod config;
mod exit;
mod report;

use anyhow::Result;
use artifacts::FileHash;
use clap::{Parser, Subcommand};
use cmd::analyze::{ContribArgs, MetricsArgs, StatsArgs};
use cmd::baseline::BaselineCmd;
use cmd::video::{ExtractArgs, LocalizeArgs, SampleNimArgs, SynthCmd};
use config::PipelineConfig;
use exit::ErrorRecord;
use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "moments", version, about = "Highlight-moment dataset pipeline and analyses")]
struct Cli {
    /// TOML configuration with one section per subcommand.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 lets the runtime choose.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Emit logs as JSON lines.
    #[arg(long, global = true)]
    log_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find the highlight reel's moments inside the full game.
    Localize(LocalizeArgs),
    /// Sample duration-matched non-important spans.
    SampleNim(SampleNimArgs),
    /// Cut clips and write the moment manifest.
    Extract(ExtractArgs),
    /// Duration summaries over moment manifests.
    Stats(StatsArgs),
    /// Classification metrics with bootstrap intervals.
    Metrics(MetricsArgs),
    /// Modality contribution scores from per-combination logits.
    Contrib(ContribArgs),
    #[command(subcommand)]
    Baseline(BaselineCmd),
    #[command(subcommand)]
    Synth(SynthCmd),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Localize(_) => "localize",
            Command::SampleNim(_) => "sample-nim",
            Command::Extract(_) => "extract",
            Command::Stats(_) => "stats",
            Command::Metrics(_) => "metrics",
            Command::Contrib(_) => "contrib",
            Command::Baseline(BaselineCmd::Train(_)) => "baseline train",
            Command::Baseline(BaselineCmd::Eval(_)) => "baseline eval",
            Command::Synth(_) => "synth generate",
        }
    }

    fn apply(&self, cfg: &mut PipelineConfig) {
        match self {
            Command::Localize(a) => a.apply(cfg),
            Command::SampleNim(a) => a.apply(cfg),
            Command::Extract(a) => a.apply(cfg),
            Command::Metrics(a) => a.apply(cfg),
            Command::Contrib(a) => a.apply(cfg),
            Command::Baseline(BaselineCmd::Train(a)) => a.apply(cfg),
            Command::Synth(SynthCmd::Generate(a)) => a.apply(cfg),
            Command::Stats(_) | Command::Baseline(BaselineCmd::Eval(_)) => {}
        }
    }
}

fn init_logging(cli: &Cli) {
    let default = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_ansi(std::io::stderr().is_terminal())
        .with_writer(std::io::stderr);
    if cli.log_json {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn configure(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.global.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.global.workers = w;
    }
    cli.command.apply(&mut cfg);
    cfg.validate()?;
    if cfg.global.workers > 0 {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.global.workers).build_global();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Vec<FileHash>> {
    let cfg = configure(cli)?;
    match &cli.command {
        Command::Localize(a) => cmd::video::run_localize(&cfg, a),
        Command::SampleNim(a) => cmd::video::run_sample_nim(&cfg, a),
        Command::Extract(a) => cmd::video::run_extract(&cfg, a),
        Command::Stats(a) => cmd::analyze::run_stats(&cfg, a),
        Command::Metrics(a) => cmd::analyze::run_metrics(&cfg, a),
        Command::Contrib(a) => cmd::analyze::run_contrib(&cfg, a),
        Command::Baseline(BaselineCmd::Train(a)) => cmd::baseline::run_train(&cfg, a),
        Command::Baseline(BaselineCmd::Eval(a)) => cmd::baseline::run_eval(&cfg, a),
        Command::Synth(SynthCmd::Generate(a)) => cmd::video::run_synth(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    let outcome = std::panic::catch_unwind(|| run(&cli));
    let record = match outcome {
        Ok(Ok(outputs)) => {
            let summary = serde_json::json!({
                "status": "ok",
                "subcommand": cli.command.name(),
                "outputs": outputs,
            });
            println!("{summary}");
            return ExitCode::SUCCESS;
        }
        Ok(Err(e)) => ErrorRecord::new(&e),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            ErrorRecord::internal(msg)
        }
    };
    eprintln!("{}", record.to_json());
    ExitCode::from(record.code as u8)
}

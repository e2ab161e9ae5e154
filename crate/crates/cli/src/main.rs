//! `sim`: seeded, file-driven experiment runner for the slicing simulator.
//!
//! `reputation` traces per-station reputation under configured denial
//! schedules; `train` runs one training scenario and persists its log,
//! checkpoint and summary; `evaluate` rolls a trained checkpoint greedily;
//! `emit` assembles plot-ready CSV bundles from artifacts of prior runs.
//! Every run is pinned by (config, seed): identical inputs reproduce every
//! output file byte for byte. Failures print a single JSON object line on
//! stderr and exit nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slicesim_core::agent::Mode;
use slicesim_core::config::ExperimentConfig;
use slicesim_core::error::{Result, SimError};
use slicesim_core::experiments;

#[derive(Parser)]
#[command(
    name = "sim",
    version,
    about = "Seeded experiment runner for blockchain-secured network-slice allocation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace per-station reputation under the configured denial schedules.
    Reputation(CommonArgs),
    /// Train one scenario; writes training_{tag}.csv, checkpoint_{tag}.json
    /// and summary_{tag}.json.
    Train(ScenarioArgs),
    /// Greedy rollouts of a trained checkpoint; writes eval_{tag}.json and,
    /// when the config asks for it, trajectory_{tag}.jsonl.
    Evaluate(ScenarioArgs),
    /// Assemble plot-ready CSV bundles from artifacts already in --out.
    Emit(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML); omitted keys take built-in defaults.
    #[arg(long)]
    config: PathBuf,
    /// Root seed for every random stream; falls back to run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory; falls back to run.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training objective.
    #[arg(long, value_enum, default_value_t = ModeArg::Constrained)]
    mode: ModeArg,
    /// Enable the malicious-miner denial scenario.
    #[arg(long)]
    attacks: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Constrained,
    MinLatency,
    MinDos,
}

impl From<ModeArg> for Mode {
    fn from(arg: ModeArg) -> Mode {
        match arg {
            ModeArg::Constrained => Mode::Constrained,
            ModeArg::MinLatency => Mode::MinLatency,
            ModeArg::MinDos => Mode::MinDos,
        }
    }
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config)
    }

    fn seed(&self, cfg: &ExperimentConfig) -> Result<u64> {
        self.seed.or(cfg.run.seed).ok_or_else(|| {
            SimError::config("run.seed", "pass --seed or set run.seed in the config")
        })
    }

    fn out(&self, cfg: &ExperimentConfig) -> Result<PathBuf> {
        self.out.clone().or_else(|| cfg.run.out_dir.clone()).ok_or_else(|| {
            SimError::config("run.out_dir", "pass --out or set run.out_dir in the config")
        })
    }
}

fn report(paths: &[PathBuf]) {
    for path in paths {
        println!("wrote {}", path.display());
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Reputation(args) => {
            let cfg = args.load()?;
            let (seed, out) = (args.seed(&cfg)?, args.out(&cfg)?);
            report(&experiments::run_reputation_experiment(&cfg, seed, &out)?);
        }
        Command::Train(args) => {
            let cfg = args.common.load()?;
            let (seed, out) = (args.common.seed(&cfg)?, args.common.out(&cfg)?);
            let arts =
                experiments::run_training(&cfg, args.mode.into(), args.attacks, seed, &out)?;
            report(&[arts.log, arts.checkpoint, arts.summary]);
        }
        Command::Evaluate(args) => {
            let cfg = args.common.load()?;
            let (seed, out) = (args.common.seed(&cfg)?, args.common.out(&cfg)?);
            let arts =
                experiments::run_evaluation(&cfg, args.mode.into(), args.attacks, seed, &out)?;
            let mut paths = vec![arts.summary];
            paths.extend(arts.trajectory);
            report(&paths);
        }
        Command::Emit(args) => {
            let cfg = args.load()?;
            let out = args.out(&cfg)?;
            report(&experiments::emit_figure_data(&cfg, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", serde_json::json!({ "error": err.to_string() }));
            ExitCode::FAILURE
        }
    }
}

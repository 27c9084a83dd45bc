use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use neurop::{EvalArgs, EvalMode, RunConfig};

#[derive(Parser)]
#[command(name = "neurop", version, about = "Train and evaluate neural operators on reference PDE data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from the `data` section of a config.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the configured model on a dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint in one of the experiment modes.
    Eval {
        #[arg(long, value_enum)]
        mode: EvalMode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(clap::Args)]
struct Common {
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, common } => {
            let cfg = common.apply(RunConfig::load(&config)?);
            println!("{}", cfg.effective_json());
            let s = neurop::gen_data(&cfg)?;
            println!("wrote {} samples to {} (sha256 {})", s.n_samples, s.dataset.display(), s.sha256);
        }
        Command::Train { config, dataset, common } => {
            let cfg = common.apply(RunConfig::load(&config)?);
            println!("{}", cfg.effective_json());
            let m = neurop::train(&cfg, &dataset)?;
            for r in &m.history.epochs {
                eprintln!("epoch {:4}  lr {:.3e}  train {:.4e}  test {}", r.epoch, r.lr, r.train_loss, r.test_loss.map_or("-".into(), |t| format!("{t:.4e}")));
            }
            println!("final checkpoint {}; {:.1} s", m.final_checkpoint.display(), m.wall_clock_seconds);
        }
        Command::Eval { mode, config, checkpoint, dataset, common } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?.map(|c| common.apply(c));
            let out_dir = common.out_dir.clone().or_else(|| cfg.as_ref().map(|c| c.out_dir.clone())).unwrap_or_else(|| PathBuf::from("."));
            let args = EvalArgs { config: cfg, checkpoint, dataset, out_dir };
            let out = neurop::eval(mode, &args)?;
            println!("{}", serde_json::to_string_pretty(&out.metrics).context("printing metrics")?);
            println!("wrote {} and {}", out.json.display(), out.csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use super::config::ConfigFile;
use super::{evaluate, pipeline, plot, report, sample, simulate, train, validate_run_dir, ExperimentConfig};
use crate::error::{Error, Result};
use crate::sims::TaskId;

#[derive(Parser, Debug)]
#[command(name = "amortis", version, about = "Amortized simulation-based inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the observation and a training dataset per seed.
    Simulate(Common),
    /// Train a model on each seed's dataset.
    Train(Common),
    /// Draw posterior samples for the observation from each seed's checkpoint.
    Sample(Common),
    /// Score samples against the oracle (when one exists) and run the predictive check.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Evaluate this CSV instead of the seed's samples file (single seed only).
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Aggregate per-seed metrics into report.json and write plot data.
    Report(Common),
    /// simulate, train, sample, evaluate and report in one go.
    Pipeline(Common),
    /// Check that a finished run directory is complete and consistent.
    Validate(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML file with the same keys as the long flags (underscored); flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskId>,
    /// cpvae or upvae
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    /// Repeatable or comma separated.
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    observation_seed: Option<u64>,
    #[arg(long)]
    num_samples: Option<usize>,
    /// Output root; defaults to $AMORTIS_OUT, then ./runs.
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    min_delta: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    c2st_epochs: Option<usize>,
    #[arg(long)]
    c2st_folds: Option<usize>,
    #[arg(long)]
    ppc_samples: Option<usize>,
}

impl Common {
    fn resolve(self) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            task: self.task,
            model: self.model,
            budget: self.budget,
            seeds: (!self.seeds.is_empty()).then_some(self.seeds),
            observation_seed: self.observation_seed,
            num_samples: self.num_samples,
            out_dir: self.out_dir,
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            clip_norm: self.clip_norm,
            val_fraction: self.val_fraction,
            min_delta: self.min_delta,
            weight_decay: self.weight_decay,
            c2st_epochs: self.c2st_epochs,
            c2st_folds: self.c2st_folds,
            ppc_samples: self.ppc_samples,
        };
        file.overlay(flags).resolve()
    }
}

fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn dispatch(cmd: Command) -> Result<serde_json::Value> {
    let progress = |msg: &str| eprintln!("amortis: {msg}");
    let (name, cfg, samples) = match cmd {
        Command::Simulate(c) => ("simulate", c.resolve()?, None),
        Command::Train(c) => ("train", c.resolve()?, None),
        Command::Sample(c) => ("sample", c.resolve()?, None),
        Command::Evaluate { common, samples } => ("evaluate", common.resolve()?, samples),
        Command::Report(c) => ("report", c.resolve()?, None),
        Command::Pipeline(c) => ("pipeline", c.resolve()?, None),
        Command::Validate(c) => ("validate", c.resolve()?, None),
    };
    let run_dir = cfg.run_dir();
    let mut out = json!({
        "command": name,
        "run_dir": run_dir.display().to_string(),
        "config_hash": cfg.hash(),
    });
    match name {
        "simulate" => {
            for &s in &cfg.seeds {
                progress(&format!("seed {s}: simulate"));
                simulate(&cfg, s)?;
            }
        }
        "train" => {
            let mut epochs = Vec::new();
            for &s in &cfg.seeds {
                progress(&format!("seed {s}: train"));
                let r = train(&cfg, s)?;
                epochs.push(json!({ "seed": s, "best_epoch": r.best_epoch, "best_val_loss": r.best_val_loss }));
            }
            out["train"] = epochs.into();
        }
        "sample" => {
            for &s in &cfg.seeds {
                sample(&cfg, s)?;
            }
        }
        "evaluate" => {
            if samples.is_some() && cfg.seeds.len() != 1 {
                return Err(Error::Config("--samples needs exactly one --seed".into()));
            }
            let mut all = Vec::new();
            for &s in &cfg.seeds {
                progress(&format!("seed {s}: evaluate"));
                all.push(serde_json::to_value(evaluate(&cfg, s, samples.as_deref())?)?);
            }
            out["metrics"] = all.into();
        }
        "report" => {
            let rec = report(&cfg)?;
            plot(&cfg)?;
            out["aggregate"] = serde_json::to_value(&rec.aggregate)?;
        }
        "pipeline" => {
            let rec = pipeline(&cfg, progress)?;
            out["aggregate"] = serde_json::to_value(&rec.aggregate)?;
        }
        "validate" => validate_run_dir(&cfg)?,
        _ => unreachable!(),
    }
    Ok(out)
}

/// Parses `args` (program name first) and runs the command; returns the process exit code.
/// Failures print a `{"error": {"kind", "message"}}` record on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    let msg = e.render().to_string();
                    eprintln!("{}", error_record("usage", msg.trim()));
                    2
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(v) => {
            println!("{v}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            1
        }
    }
}

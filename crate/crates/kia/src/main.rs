use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use kia::config::ExperimentConfig;
use kia::harness;
use kia_core::train::TrainError;

#[derive(Parser)]
#[command(
    name = "kia",
    about = "Koopman invertible autoencoder experiments: simulate, train, evaluate, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the config-driven subcommands; every flag overrides the
/// corresponding config-file field.
#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; fans out to data/embedding/noise/init/shuffle sub-seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment kind: pendulum or climate.
    #[arg(long)]
    experiment: Option<String>,
    /// Model variant: KIA, KAE, CKAE, persistence or climatology.
    #[arg(long)]
    variant: Option<String>,
    /// Pendulum initial angle in radians.
    #[arg(long)]
    theta0: Option<f64>,
    /// Observation noise standard deviation.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Multi-step training horizon.
    #[arg(long)]
    k_steps: Option<usize>,
    /// Maximum training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Evaluation rollout length.
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of evaluation initial conditions.
    #[arg(long)]
    inits: Option<usize>,
    /// Comma-separated K-day-ahead leads, e.g. 1,7,14,21,30.
    #[arg(long, value_name = "LIST")]
    k_day: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(kind) = &self.experiment {
            config.experiment = serde_json::from_value(serde_json::Value::String(kind.clone()))
                .with_context(|| format!("unknown experiment kind {kind:?}"))?;
        }
        if let Some(variant) = &self.variant {
            config.variant = variant.clone();
        }
        if let Some(theta0) = self.theta0 {
            config.pendulum.theta0 = theta0;
        }
        if let Some(noise) = self.noise_std {
            config.noise_std = noise;
        }
        if let Some(k) = self.k_steps {
            config.train.k_steps = Some(k);
        }
        if let Some(epochs) = self.epochs {
            config.train.max_epochs = epochs;
        }
        if let Some(horizon) = self.horizon {
            config.eval.horizon = Some(horizon);
        }
        if let Some(inits) = self.inits {
            config.eval.n_inits = inits;
        }
        if let Some(list) = &self.k_day {
            config.eval.k_days = parse_usize_list(list)?;
        }
        Ok(config)
    }
}

fn parse_usize_list(list: &str) -> Result<Vec<usize>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("invalid list entry {s:?}"))
        })
        .collect()
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file (pendulum trajectory or synthetic grid).
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset file.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint or a trivial baseline against a dataset.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trained model; not needed for persistence/climatology.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// Optional noise-free counterpart used as the scoring target.
        #[arg(long)]
        clean_dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine evaluated runs into a comparison CSV and SVG charts.
    Report {
        /// Run directories containing summary.json and report.csv.
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Log-scale vertical axis.
        #[arg(long)]
        log_scale: bool,
    },
    /// Train across several training-set sizes and tabulate errors.
    Ablation {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated training sizes, e.g. 200,300,400.
        #[arg(long, value_name = "LIST", default_value = "200,300,400")]
        sizes: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let config = config.resolve()?;
            let path = harness::cmd_simulate(&config, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            config,
            dataset,
            out,
        } => {
            let config = config.resolve()?;
            let outcome = harness::cmd_train(&config, &dataset, &out)?;
            println!(
                "trained {} epochs (best {}, validation {:.6e}{})",
                outcome.history.len(),
                outcome.best_epoch,
                outcome.best_val,
                if outcome.stopped_early {
                    ", stopped early"
                } else {
                    ""
                }
            );
        }
        Command::Evaluate {
            config,
            checkpoint,
            dataset,
            clean_dataset,
            out,
        } => {
            let config = config.resolve()?;
            harness::cmd_evaluate(
                &config,
                checkpoint.as_deref(),
                &dataset,
                clean_dataset.as_deref(),
                &out,
            )?;
        }
        Command::Report {
            runs,
            out,
            log_scale,
        } => {
            harness::cmd_report(&runs, &out, log_scale)?;
            println!("wrote {}", out.join(harness::COMPARISON_FILE).display());
        }
        Command::Ablation { config, sizes, out } => {
            let config = config.resolve()?;
            let sizes = parse_usize_list(&sizes)?;
            harness::cmd_ablation(&config, &sizes, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            // divergence gets its own exit code so callers can tell it apart
            if err
                .downcast_ref::<TrainError>()
                .is_some_and(|e| matches!(e, TrainError::Diverged { .. }))
            {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

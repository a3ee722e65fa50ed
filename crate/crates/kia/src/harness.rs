//! Subcommand implementations behind the `kia` binary. Everything here is a
//! plain function over an [`ExperimentConfig`] so the CLI, tests and the
//! acceptance suite drive the same code paths.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use kia_core::dynamics::{
    add_gaussian_noise, compute_climatology, generate_synthetic_sst, orthogonal_embed,
    simulate_pendulum, split_dataset, GridSeries, TrajectoryDataset,
};
use kia_core::eval::{
    evaluate_horizon, evaluate_k_day, ErrorMetric, ForecastReport, Forecaster, HorizonConfig,
    KDayTable, ReportMeta,
};
use kia_core::model::KiaModel;
use kia_core::train::{train, TrainOutcome};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::format::{
    load_any, load_checkpoint, save_checkpoint, save_dataset, save_grid, write_history_csv,
    DatasetFile, FORMAT_VERSION,
};
use crate::report::{
    error_chart_svg, read_mean_curve, read_summary_json, write_comparison_csv, write_kday_csv,
    write_report_csv, write_summary_json, Summary,
};

pub const DATASET_FILE: &str = "dataset.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const KDAY_FILE: &str = "kday.csv";
pub const METADATA_FILE: &str = "metadata.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const CHART_FILE: &str = "errors.svg";
pub const ABLATION_FILE: &str = "ablation.csv";

/// Every command leaves a metadata record sufficient to re-run it: the
/// effective config, the seed, format versions and the produced files.
fn write_metadata(
    out_dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    outputs: &[&str],
) -> Result<()> {
    let record = json!({
        "command": command,
        "format_version": FORMAT_VERSION,
        "seed": config.seed,
        "config": config,
        "outputs": outputs,
    });
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    fs::write(out_dir.join(METADATA_FILE), text)?;
    Ok(())
}

/// Pendulum pipeline: integrate, embed, perturb, split.
pub fn build_pendulum_dataset(config: &ExperimentConfig) -> Result<TrajectoryDataset> {
    let seeds = config.seeds();
    let states = simulate_pendulum(&config.pendulum_params())?;
    let lifted = orthogonal_embed(&states, config.pendulum.embed_dim, seeds.embedding())?;
    let noisy = add_gaussian_noise(&lifted, config.noise_std, seeds.noise())?;
    let mut data = split_dataset(
        &noisy,
        (config.split[0], config.split[1], config.split[2]),
    )?;
    data.seed = config.seed;
    Ok(data)
}

/// Synthetic grid pipeline: generate and attach the training climatology.
pub fn build_climate_series(config: &ExperimentConfig) -> Result<GridSeries> {
    let mut series = generate_synthetic_sst(&config.grid_params())?;
    let clim = compute_climatology(&series, series.split_days.0)?;
    series.climatology = Some(clim);
    series.seed = config.seed;
    Ok(series)
}

/// Writes the dataset (plus metadata) for the configured experiment.
pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(DATASET_FILE);
    match config.experiment {
        ExperimentKind::Pendulum => {
            let data = build_pendulum_dataset(config)?;
            save_dataset(&data, &path)?;
        }
        ExperimentKind::Climate => {
            let series = build_climate_series(config)?;
            save_grid(&series, &path)?;
        }
    }
    write_metadata(out_dir, "simulate", config, &[DATASET_FILE, METADATA_FILE])?;
    Ok(path)
}

fn load_training_data(path: &Path) -> Result<TrajectoryDataset> {
    Ok(match load_any(path)? {
        DatasetFile::Trajectory(ds) => ds,
        DatasetFile::Grid(gs) => gs.as_trajectory(),
    })
}

/// Mean field and pooled standard deviation over the training split; raw °C
/// observations sit far from unit scale and would saturate the tanh stacks.
pub fn observation_normalizer(data: &TrajectoryDataset) -> (Vec<f64>, f64) {
    let train = data.train_range();
    let n = train.len().max(1) as f64;
    let mut shift = vec![0.0; data.dim];
    for i in train.clone() {
        for (acc, v) in shift.iter_mut().zip(data.row(i)) {
            *acc += v;
        }
    }
    for s in shift.iter_mut() {
        *s /= n;
    }
    let mut ss = 0.0;
    for i in train.clone() {
        for (s, v) in shift.iter().zip(data.row(i)) {
            ss += (v - s) * (v - s);
        }
    }
    let scale = (ss / (n * data.dim as f64)).sqrt().max(1e-9);
    (shift, scale)
}

/// Trains the configured variant on a dataset file; writes the checkpoint,
/// the per-epoch history CSV and the metadata record.
pub fn cmd_train(
    config: &ExperimentConfig,
    dataset_path: &Path,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let variant = config
        .model_variant()
        .with_context(|| format!("variant {:?} is not trainable (use KIA, KAE or CKAE)", config.variant))?;
    fs::create_dir_all(out_dir)?;
    let file = load_any(dataset_path)?;
    let standardize = matches!(file, DatasetFile::Grid(_));
    let data = match file {
        DatasetFile::Trajectory(ds) => ds,
        DatasetFile::Grid(gs) => gs.as_trajectory(),
    };
    let mut model = KiaModel::new(config.model_config(data.dim, variant))?;
    if standardize {
        let (shift, scale) = observation_normalizer(&data);
        model.set_normalizer(shift, scale)?;
    }
    let weights = config.loss_weights(variant);
    let outcome = train(&mut model, &data, &config.train_config(), &weights)?;
    save_checkpoint(&model, &out_dir.join(CHECKPOINT_FILE))?;
    write_history_csv(&outcome.history, &out_dir.join(HISTORY_FILE))?;
    write_metadata(
        out_dir,
        "train",
        config,
        &[CHECKPOINT_FILE, HISTORY_FILE, METADATA_FILE],
    )?;
    Ok(outcome)
}

fn report_meta(config: &ExperimentConfig, model: &str) -> ReportMeta {
    ReportMeta {
        model: model.to_string(),
        seed: config.seed,
        noise_std: config.noise_std,
        label: config.run_label(),
    }
}

/// Evaluation artifacts produced by [`cmd_evaluate`].
#[derive(Debug)]
pub struct Evaluation {
    pub summary: Summary,
    pub report: ForecastReport,
    pub kday: Option<KDayTable>,
}

/// Evaluates a checkpoint (or a trivial baseline) against a dataset file,
/// writing the per-step report CSV, the JSON summary and, for grid data,
/// the K-day-ahead table. Prints the three-column summary.
pub fn cmd_evaluate(
    config: &ExperimentConfig,
    checkpoint: Option<&Path>,
    dataset_path: &Path,
    clean_dataset: Option<&Path>,
    out_dir: &Path,
) -> Result<Evaluation> {
    fs::create_dir_all(out_dir)?;
    let file = load_any(dataset_path)?;

    let model: Option<KiaModel> = match config.variant.to_ascii_lowercase().as_str() {
        "persistence" | "climatology" => None,
        _ => {
            let path = checkpoint.with_context(|| {
                format!("variant {:?} needs a trained checkpoint", config.variant)
            })?;
            Some(load_checkpoint(path)?)
        }
    };

    match file {
        DatasetFile::Trajectory(mut data) => {
            if let Some(clean_path) = clean_dataset {
                let clean = load_training_data(clean_path)?;
                if clean.n_points != data.n_points || clean.dim != data.dim {
                    bail!(
                        "clean dataset is {}×{}, observed dataset is {}×{}",
                        clean.n_points,
                        clean.dim,
                        data.n_points,
                        data.dim
                    );
                }
                data.clean = Some(clean.observations);
            }
            let forecaster = match &model {
                Some(m) => {
                    check_dims(m, data.dim)?;
                    Forecaster::Model(m)
                }
                None => match config.variant.to_ascii_lowercase().as_str() {
                    "persistence" => Forecaster::Persistence,
                    _ => bail!("climatology applies to grid datasets only"),
                },
            };
            let horizon_config = HorizonConfig {
                n_inits: config.eval.n_inits,
                horizon: config.horizon(),
                metric: ErrorMetric::Relative,
                clean_targets: config.eval.clean_targets || clean_dataset.is_some(),
            };
            let report = evaluate_horizon(
                &forecaster,
                &data,
                &horizon_config,
                report_meta(config, forecaster.label()),
            )?;
            finish_evaluation(config, out_dir, report, None)
        }
        DatasetFile::Grid(series) => {
            let clim = series.climatology.clone();
            let forecaster = match &model {
                Some(m) => {
                    check_dims(m, series.cells())?;
                    Forecaster::Model(m)
                }
                None => match config.variant.to_ascii_lowercase().as_str() {
                    "persistence" => Forecaster::Persistence,
                    _ => {
                        let clim = clim
                            .as_deref()
                            .context("dataset carries no climatology field")?;
                        Forecaster::Climatology {
                            climatology: clim,
                            cells: series.cells(),
                        }
                    }
                },
            };
            let data = series.as_trajectory();
            let horizon_config = HorizonConfig {
                n_inits: config.eval.n_inits,
                horizon: config.horizon(),
                metric: ErrorMetric::CelsiusMae,
                clean_targets: false,
            };
            let report = evaluate_horizon(
                &forecaster,
                &data,
                &horizon_config,
                report_meta(config, forecaster.label()),
            )?;
            let kday = evaluate_k_day(
                &forecaster,
                &series,
                &config.eval.k_days,
                report_meta(config, forecaster.label()),
            )?;
            finish_evaluation(config, out_dir, report, Some(kday))
        }
    }
}

fn check_dims(model: &KiaModel, data_dim: usize) -> Result<()> {
    if model.input_dim() != data_dim {
        bail!(
            "checkpoint expects observations of dimension {}, dataset provides {}",
            model.input_dim(),
            data_dim
        );
    }
    Ok(())
}

fn finish_evaluation(
    config: &ExperimentConfig,
    out_dir: &Path,
    report: ForecastReport,
    kday: Option<KDayTable>,
) -> Result<Evaluation> {
    write_report_csv(&report, &out_dir.join(REPORT_FILE))?;
    let summary = Summary::from_report(&report);
    write_summary_json(&summary, &out_dir.join(SUMMARY_FILE))?;
    let mut outputs = vec![REPORT_FILE, SUMMARY_FILE, METADATA_FILE];
    if let Some(table) = &kday {
        write_kday_csv(table, &out_dir.join(KDAY_FILE))?;
        outputs.push(KDAY_FILE);
    }
    write_metadata(out_dir, "evaluate", config, &outputs)?;
    print!("{}", summary.console_table());
    if let Some(table) = &kday {
        println!("K-day-ahead Celsius MAE:");
        for entry in &table.entries {
            println!(
                "  K={:<3} {:.3} ({} days, {} skipped)",
                entry.lead, entry.mean_mae, entry.days, entry.skipped
            );
        }
    }
    Ok(Evaluation {
        summary,
        report,
        kday,
    })
}

/// Combines completed runs into a comparison CSV and an error-over-horizon
/// SVG chart. Missing or partial run directories are reported and skipped.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path, log_scale: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    let mut skipped = Vec::new();
    for dir in run_dirs {
        let summary_path = dir.join(SUMMARY_FILE);
        let report_path = dir.join(REPORT_FILE);
        match (read_summary_json(&summary_path), read_mean_curve(&report_path)) {
            (Ok(summary), Ok(curve)) => {
                curves.push((format!("{} {}", summary.model, summary.label), curve));
                summaries.push(summary);
            }
            _ => skipped.push(dir.clone()),
        }
    }
    if summaries.is_empty() {
        bail!("no usable runs among {} directories", run_dirs.len());
    }
    write_comparison_csv(&summaries, &out_dir.join(COMPARISON_FILE))?;
    fs::write(out_dir.join(CHART_FILE), error_chart_svg(&curves, log_scale))?;
    let record = json!({
        "command": "report",
        "format_version": FORMAT_VERSION,
        "runs": run_dirs,
        "skipped": skipped,
        "log_scale": log_scale,
        "outputs": [COMPARISON_FILE, CHART_FILE, METADATA_FILE],
    });
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    fs::write(out_dir.join(METADATA_FILE), text)?;
    for dir in &skipped {
        eprintln!("skipping incomplete run directory {}", dir.display());
    }
    Ok(skipped)
}

/// One row of the training-size ablation.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub train_points: usize,
    pub all_mean: f64,
    pub all_std: f64,
    pub epochs: usize,
}

/// Trains one model per training-set size on the truncated train split
/// (validation and test untouched) and reports the mean prediction error.
pub fn cmd_ablation(
    config: &ExperimentConfig,
    sizes: &[usize],
    out_dir: &Path,
) -> Result<Vec<AblationRow>> {
    if config.experiment != ExperimentKind::Pendulum {
        bail!("the training-size ablation is defined for the pendulum experiment");
    }
    let variant = config
        .model_variant()
        .with_context(|| format!("variant {:?} is not trainable", config.variant))?;
    fs::create_dir_all(out_dir)?;
    let full = build_pendulum_dataset(config)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let data = full.with_truncated_train(size)?;
        let mut model = KiaModel::new(config.model_config(data.dim, variant))?;
        let weights = config.loss_weights(variant);
        let outcome = train(&mut model, &data, &config.train_config(), &weights)?;
        let report = evaluate_horizon(
            &Forecaster::Model(&model),
            &data,
            &HorizonConfig {
                n_inits: config.eval.n_inits,
                horizon: config.horizon(),
                metric: ErrorMetric::Relative,
                clean_targets: config.eval.clean_targets,
            },
            report_meta(config, variant.as_str()),
        )?;
        rows.push(AblationRow {
            train_points: size,
            all_mean: report.all.mean,
            all_std: report.all.std,
            epochs: outcome.history.len(),
        });
    }
    let mut csv = String::from("train_points,all_mean,all_std,epochs\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.train_points, row.all_mean, row.all_std, row.epochs
        ));
    }
    fs::write(out_dir.join(ABLATION_FILE), csv)?;
    write_metadata(out_dir, "ablation", config, &[ABLATION_FILE, METADATA_FILE])?;
    for row in &rows {
        println!(
            "train_points={:<5} error {:.3}±{:.3} ({} epochs)",
            row.train_points, row.all_mean, row.all_std, row.epochs
        );
    }
    Ok(rows)
}

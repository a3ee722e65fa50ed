//! Binary file formats. Every file is a one-line JSON header, a newline,
//! then a little-endian f64 payload; round-trips are byte-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use kia_core::dynamics::{GridSeries, TrajectoryDataset, DAYS_PER_YEAR};
use kia_core::model::{KiaModel, ModelConfig, Variant};
use kia_core::train::EpochStats;

pub const FORMAT_VERSION: u32 = 1;
const DATASET_FORMAT: &str = "kia-dataset";
const CHECKPOINT_FORMAT: &str = "kia-checkpoint";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("file has no header line")]
    MissingHeader,
    #[error("not a {expected} file (found {found:?})")]
    WrongFormat { expected: &'static str, found: String },
    #[error("format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("payload truncated: header promises {expected} values, payload holds {found}")]
    Truncated { expected: usize, found: usize },
    #[error("header shape {shape:?} disagrees with a payload of {values} values")]
    ShapeDisagrees { shape: Vec<usize>, values: usize },
    #[error("unknown model variant {0:?}")]
    UnknownVariant(String),
    #[error("invalid header: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    kind: String,
    shape: Vec<usize>,
    dt: f64,
    split: [usize; 3],
    seed: u64,
    noise_std: f64,
    embedding_shape: Option<[usize; 2]>,
    #[serde(default)]
    region: Option<String>,
    #[serde(default)]
    climatology: bool,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    variant: String,
    input_dim: usize,
    latent_dim: usize,
    encoder_hidden: Vec<usize>,
    coupling_depth: usize,
    coupling_bias: bool,
    seed: u64,
    param_count: usize,
    #[serde(default)]
    obs_shift: Option<Vec<f64>>,
    #[serde(default)]
    obs_scale: Option<f64>,
}

fn write_file(path: &Path, header: &impl Serialize, payload: &[f64]) -> Result<(), FormatError> {
    let mut bytes = serde_json::to_vec(header)?;
    bytes.push(b'\n');
    bytes.reserve(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

fn read_file<H: for<'de> Deserialize<'de>>(path: &Path) -> Result<(H, Vec<f64>), FormatError> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(FormatError::MissingHeader)?;
    let header: H = serde_json::from_slice(&bytes[..newline])?;
    let body = &bytes[newline + 1..];
    let mut payload = Vec::with_capacity(body.len() / 8);
    for chunk in body.chunks_exact(8) {
        payload.push(f64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
    }
    Ok((header, payload))
}

fn check_format(found: &str, version: u32, expected: &'static str) -> Result<(), FormatError> {
    if found != expected {
        return Err(FormatError::WrongFormat {
            expected,
            found: found.to_string(),
        });
    }
    if version != FORMAT_VERSION {
        return Err(FormatError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

/// Writes a trajectory dataset: header, then the embedding matrix (when
/// present), then the observations row-major.
pub fn save_dataset(dataset: &TrajectoryDataset, path: &Path) -> Result<(), FormatError> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        version: FORMAT_VERSION,
        kind: "trajectory".to_string(),
        shape: vec![dataset.n_points, dataset.dim],
        dt: dataset.dt,
        split: [dataset.split.0, dataset.split.1, dataset.split.2],
        seed: dataset.seed,
        noise_std: dataset.noise_std,
        embedding_shape: dataset.embedding.as_ref().map(|_| [dataset.dim, 2]),
        region: None,
        climatology: false,
    };
    let mut payload = Vec::new();
    if let Some(embedding) = &dataset.embedding {
        payload.extend_from_slice(embedding);
    }
    payload.extend_from_slice(&dataset.observations);
    write_file(path, &header, &payload)
}

pub fn load_dataset(path: &Path) -> Result<TrajectoryDataset, FormatError> {
    match load_any(path)? {
        DatasetFile::Trajectory(ds) => Ok(ds),
        DatasetFile::Grid(_) => Err(FormatError::Invalid(
            "expected a trajectory dataset, found a grid series".to_string(),
        )),
    }
}

/// Writes a grid series: header, then the climatology (when present), then
/// the day fields.
pub fn save_grid(series: &GridSeries, path: &Path) -> Result<(), FormatError> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        version: FORMAT_VERSION,
        kind: "grid".to_string(),
        shape: vec![series.days, series.height, series.width],
        dt: 1.0,
        split: [
            series.split_days.0,
            series.split_days.1,
            series.split_days.2,
        ],
        seed: series.seed,
        noise_std: 0.0,
        embedding_shape: None,
        region: Some(series.region.clone()),
        climatology: series.climatology.is_some(),
    };
    let mut payload = Vec::new();
    if let Some(clim) = &series.climatology {
        payload.extend_from_slice(clim);
    }
    payload.extend_from_slice(&series.grid);
    write_file(path, &header, &payload)
}

pub fn load_grid(path: &Path) -> Result<GridSeries, FormatError> {
    match load_any(path)? {
        DatasetFile::Grid(gs) => Ok(gs),
        DatasetFile::Trajectory(_) => Err(FormatError::Invalid(
            "expected a grid series, found a trajectory dataset".to_string(),
        )),
    }
}

/// Either flavor of dataset file.
pub enum DatasetFile {
    Trajectory(TrajectoryDataset),
    Grid(GridSeries),
}

pub fn load_any(path: &Path) -> Result<DatasetFile, FormatError> {
    let (header, payload): (DatasetHeader, Vec<f64>) = read_file(path)?;
    check_format(&header.format, header.version, DATASET_FORMAT)?;
    match header.kind.as_str() {
        "trajectory" => {
            if header.shape.len() != 2 {
                return Err(FormatError::Invalid(format!(
                    "trajectory shape must be [n, m], got {:?}",
                    header.shape
                )));
            }
            let (n, m) = (header.shape[0], header.shape[1]);
            let embed_len = match header.embedding_shape {
                Some([rows, cols]) => {
                    if rows != m || cols != 2 {
                        return Err(FormatError::Invalid(format!(
                            "embedding shape [{rows}, {cols}] does not match observations of dimension {m}"
                        )));
                    }
                    rows * cols
                }
                None => 0,
            };
            let expected = embed_len + n * m;
            if payload.len() < expected {
                return Err(FormatError::Truncated {
                    expected,
                    found: payload.len(),
                });
            }
            if payload.len() > expected {
                return Err(FormatError::ShapeDisagrees {
                    shape: header.shape,
                    values: payload.len(),
                });
            }
            if header.split.iter().sum::<usize>() != n {
                return Err(FormatError::Invalid(format!(
                    "split {:?} does not partition {n} points",
                    header.split
                )));
            }
            let embedding = (embed_len > 0).then(|| payload[..embed_len].to_vec());
            Ok(DatasetFile::Trajectory(TrajectoryDataset {
                observations: payload[embed_len..].to_vec(),
                n_points: n,
                dim: m,
                dt: header.dt,
                split: (header.split[0], header.split[1], header.split[2]),
                embedding,
                noise_std: header.noise_std,
                seed: header.seed,
                clean: None,
            }))
        }
        "grid" => {
            if header.shape.len() != 3 {
                return Err(FormatError::Invalid(format!(
                    "grid shape must be [days, h, w], got {:?}",
                    header.shape
                )));
            }
            let (days, h, w) = (header.shape[0], header.shape[1], header.shape[2]);
            let clim_len = if header.climatology {
                DAYS_PER_YEAR * h * w
            } else {
                0
            };
            let expected = clim_len + days * h * w;
            if payload.len() < expected {
                return Err(FormatError::Truncated {
                    expected,
                    found: payload.len(),
                });
            }
            if payload.len() > expected {
                return Err(FormatError::ShapeDisagrees {
                    shape: header.shape,
                    values: payload.len(),
                });
            }
            let climatology = header.climatology.then(|| payload[..clim_len].to_vec());
            Ok(DatasetFile::Grid(GridSeries {
                days,
                height: h,
                width: w,
                grid: payload[clim_len..].to_vec(),
                region: header.region.unwrap_or_else(|| "unknown".to_string()),
                climatology,
                split_days: (header.split[0], header.split[1], header.split[2]),
                seed: header.seed,
            }))
        }
        other => Err(FormatError::Invalid(format!("unknown dataset kind {other:?}"))),
    }
}

/// Writes architecture + parameters; the parameter blob is in declaration
/// order and the round-trip is byte-exact.
pub fn save_checkpoint(model: &KiaModel, path: &Path) -> Result<(), FormatError> {
    let cfg = &model.config;
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        version: FORMAT_VERSION,
        variant: cfg.variant.as_str().to_string(),
        input_dim: cfg.input_dim,
        latent_dim: cfg.latent_dim,
        encoder_hidden: cfg.encoder_hidden.clone(),
        coupling_depth: cfg.coupling_depth,
        coupling_bias: cfg.coupling_bias,
        seed: cfg.seed,
        param_count: model.param_count(),
        obs_shift: model.normalizer.as_ref().map(|n| n.shift.clone()),
        obs_scale: model.normalizer.as_ref().map(|n| n.scale),
    };
    write_file(path, &header, &model.params_flat())
}

pub fn load_checkpoint(path: &Path) -> Result<KiaModel, FormatError> {
    let (header, payload): (CheckpointHeader, Vec<f64>) = read_file(path)?;
    check_format(&header.format, header.version, CHECKPOINT_FORMAT)?;
    let variant = Variant::parse(&header.variant)
        .ok_or_else(|| FormatError::UnknownVariant(header.variant.clone()))?;
    let config = ModelConfig {
        input_dim: header.input_dim,
        latent_dim: header.latent_dim,
        encoder_hidden: header.encoder_hidden.clone(),
        coupling_depth: header.coupling_depth,
        coupling_bias: header.coupling_bias,
        variant,
        seed: header.seed,
    };
    let mut model =
        KiaModel::new(config).map_err(|e| FormatError::Invalid(e.to_string()))?;
    if payload.len() != header.param_count {
        return Err(FormatError::Truncated {
            expected: header.param_count,
            found: payload.len(),
        });
    }
    model
        .set_params_flat(&payload)
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    if let (Some(shift), Some(scale)) = (header.obs_shift, header.obs_scale) {
        model
            .set_normalizer(shift, scale)
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
    }
    Ok(model)
}

/// Training history CSV: epoch, L_recon, L_fwd, L_bwd, L_total_train,
/// L_total_val.
pub fn write_history_csv(history: &[EpochStats], path: &Path) -> Result<(), FormatError> {
    let mut out = String::from("epoch,L_recon,L_fwd,L_bwd,L_total_train,L_total_val\n");
    for e in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch, e.recon, e.fwd, e.bwd, e.total_train, e.total_val
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

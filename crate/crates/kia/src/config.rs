//! Experiment configuration: JSON schema with per-experiment defaults,
//! CLI overrides, and the master-seed fan-out.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use kia_core::dynamics::{GridParams, PendulumParams};
use kia_core::model::{ModelConfig, Variant};
use kia_core::train::{LossWeights, TrainConfig};

/// Sub-seeds are derived from the master seed by fixed offsets so that
/// changing one stage of the pipeline never perturbs the others.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SeedPlan {
    pub master: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        SeedPlan { master }
    }

    /// Data generation (pendulum integration uses none; the grid does).
    pub fn data(&self) -> u64 {
        self.master.wrapping_add(1)
    }

    /// Random orthogonal embedding.
    pub fn embedding(&self) -> u64 {
        self.master.wrapping_add(2)
    }

    /// Measurement noise.
    pub fn noise(&self) -> u64 {
        self.master.wrapping_add(3)
    }

    /// Parameter initialization.
    pub fn init(&self) -> u64 {
        self.master.wrapping_add(4)
    }

    /// Per-epoch batch shuffling.
    pub fn shuffle(&self) -> u64 {
        self.master.wrapping_add(5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Pendulum,
    Climate,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentKind::Pendulum => f.write_str("pendulum"),
            ExperimentKind::Climate => f.write_str("climate"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumSection {
    pub theta0: f64,
    pub omega0: f64,
    pub gravity: f64,
    pub length: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
    pub embed_dim: usize,
}

impl Default for PendulumSection {
    fn default() -> Self {
        PendulumSection {
            theta0: 0.8,
            omega0: 0.0,
            gravity: 9.8,
            length: 1.0,
            t_start: 0.0,
            t_end: 400.0,
            n_points: 4000,
            embed_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub height: usize,
    pub width: usize,
    pub years: usize,
    pub weather_std: f64,
    pub drift_per_year: f64,
    pub region: String,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            height: 8,
            width: 8,
            years: 5,
            weather_std: 0.3,
            drift_per_year: 0.02,
            region: "synthetic".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Multi-step horizon; defaults to 16 for the pendulum and 4 for the
    /// climate grid when absent.
    pub k_steps: Option<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            k_steps: None,
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 500,
            patience: 20,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub recon: Option<f64>,
    pub fwd: Option<f64>,
    pub bwd: Option<f64>,
    pub con: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub coupling_depth: usize,
    pub coupling_bias: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            latent_dim: 8,
            encoder_hidden: vec![128, 64],
            coupling_depth: 2,
            coupling_bias: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Rollout length; defaults to 2000 for the pendulum and 180 for the
    /// climate grid when absent.
    pub horizon: Option<usize>,
    pub n_inits: usize,
    pub k_days: Vec<usize>,
    /// Score against the pre-noise series instead of the observed one.
    pub clean_targets: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            horizon: None,
            n_inits: 30,
            k_days: vec![1, 7, 14, 21, 30],
            clean_targets: false,
        }
    }
}

/// Complete description of one experiment run; serialized verbatim into the
/// run's metadata record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// "KIA", "KAE", "CKAE", "persistence" or "climatology".
    pub variant: String,
    pub seed: u64,
    pub noise_std: f64,
    /// (train, validation, test) lengths for the pendulum trajectory.
    pub split: [usize; 3],
    pub pendulum: PendulumSection,
    pub grid: GridSection,
    pub train: TrainSection,
    pub weights: WeightsSection,
    pub model: ModelSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Pendulum,
            variant: "KIA".to_string(),
            seed: 0,
            noise_std: 0.0,
            split: [400, 1500, 2100],
            pendulum: PendulumSection::default(),
            grid: GridSection::default(),
            train: TrainSection::default(),
            weights: WeightsSection::default(),
            model: ModelSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        Ok(config)
    }

    pub fn seeds(&self) -> SeedPlan {
        SeedPlan::new(self.seed)
    }

    /// Parsed network variant; `None` for the trivial baselines.
    pub fn model_variant(&self) -> Option<Variant> {
        Variant::parse(&self.variant)
    }

    pub fn pendulum_params(&self) -> PendulumParams {
        PendulumParams {
            theta0: self.pendulum.theta0,
            omega0: self.pendulum.omega0,
            gravity: self.pendulum.gravity,
            length: self.pendulum.length,
            t_start: self.pendulum.t_start,
            t_end: self.pendulum.t_end,
            n_points: self.pendulum.n_points,
        }
    }

    pub fn grid_params(&self) -> GridParams {
        GridParams {
            height: self.grid.height,
            width: self.grid.width,
            years: self.grid.years,
            seed: self.seeds().data(),
            weather_std: self.grid.weather_std,
            drift_per_year: self.grid.drift_per_year,
            region: self.grid.region.clone(),
        }
    }

    pub fn k_steps(&self) -> usize {
        self.train.k_steps.unwrap_or(match self.experiment {
            ExperimentKind::Pendulum => 16,
            ExperimentKind::Climate => 4,
        })
    }

    pub fn horizon(&self) -> usize {
        self.eval.horizon.unwrap_or(match self.experiment {
            ExperimentKind::Pendulum => 2000,
            ExperimentKind::Climate => 180,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            k_steps: self.k_steps(),
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: self.seeds().shuffle(),
        }
    }

    pub fn loss_weights(&self, variant: Variant) -> LossWeights {
        let defaults = LossWeights::for_variant(variant);
        LossWeights {
            recon: self.weights.recon.unwrap_or(defaults.recon),
            fwd: self.weights.fwd.unwrap_or(defaults.fwd),
            bwd: self.weights.bwd.unwrap_or(defaults.bwd),
            con: self.weights.con.unwrap_or(defaults.con),
        }
    }

    pub fn model_config(&self, input_dim: usize, variant: Variant) -> ModelConfig {
        ModelConfig {
            input_dim,
            latent_dim: self.model.latent_dim,
            encoder_hidden: self.model.encoder_hidden.clone(),
            coupling_depth: self.model.coupling_depth,
            coupling_bias: self.model.coupling_bias,
            variant,
            seed: self.seeds().init(),
        }
    }

    /// Label used in reports: the initial angle or the region name.
    pub fn run_label(&self) -> String {
        match self.experiment {
            ExperimentKind::Pendulum => format!("theta0={}", self.pendulum.theta0),
            ExperimentKind::Climate => self.grid.region.clone(),
        }
    }
}

//! Forecast evaluation: autoregressive rollouts, the relative and Celsius
//! error metrics, persistence and climatology baselines, and the
//! long-horizon / K-day-ahead protocols.

use alloc::string::String;

use alloc::vec::Vec;
use core::fmt;

use crate::dynamics::{day_of_year, GridSeries, TrajectoryDataset, DAYS_PER_YEAR};
use crate::math;
use crate::model::{KiaModel, ModelError};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub enum EvalError {
    Model(ModelError),
    ShapeMismatch { lhs: usize, rhs: usize },
    /// Not enough test points for the requested protocol.
    TestSplitTooShort { len: usize, required: usize },
    MissingClimatology,
    Config(&'static str),
}

impl From<ModelError> for EvalError {
    fn from(e: ModelError) -> Self {
        EvalError::Model(e)
    }
}

impl From<crate::tensor::TensorError> for EvalError {
    fn from(e: crate::tensor::TensorError) -> Self {
        EvalError::Model(ModelError::Tensor(e))
    }
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Model(e) => write!(f, "{e}"),
            EvalError::ShapeMismatch { lhs, rhs } => {
                write!(f, "mismatched lengths: {lhs} vs {rhs}")
            }
            EvalError::TestSplitTooShort { len, required } => {
                write!(f, "test split has {len} points, protocol needs at least {required}")
            }
            EvalError::MissingClimatology => write!(f, "series carries no climatology"),
            EvalError::Config(msg) => write!(f, "configuration error: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EvalError {}

/// Per-step error metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorMetric {
    /// Scale-invariant ‖x̂ − x‖₂ / ‖x‖₂.
    Relative,
    /// Mean absolute difference in °C over grid cells.
    CelsiusMae,
}

/// Relative forecasting error. Returns `None` when the target has zero norm
/// (the step must be excluded and counted by the caller).
pub fn relative_error(pred: &[f64], truth: &[f64]) -> Result<Option<f64>, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::ShapeMismatch {
            lhs: pred.len(),
            rhs: truth.len(),
        });
    }
    let denom = math::norm2(truth);
    if denom == 0.0 {
        return Ok(None);
    }
    let diff: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    Ok(Some(math::norm2(&diff) / denom))
}

/// Mean absolute difference in °C over all cells.
pub fn celsius_mae(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::ShapeMismatch {
            lhs: pred.len(),
            rhs: truth.len(),
        });
    }
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        total += math::abs(p - t);
    }
    Ok(total / pred.len() as f64)
}

/// Autoregressive forecast entirely in latent space: encode once, apply the
/// operator per step, decode each step. Returns horizon × m predictions.
pub fn rollout(model: &KiaModel, x0: &[f64], horizon: usize) -> Result<Vec<f64>, EvalError> {
    let mut tape = Tape::new();
    let x = Tensor::row(x0.to_vec());
    let mut z = model.encode(&mut tape, &x)?;
    let m = model.input_dim();
    let mut out = Vec::with_capacity(horizon * m);
    for _ in 0..horizon {
        z = model.koopman_forward(&mut tape, &z)?;
        let pred = model.decode(&mut tape, &z)?;
        out.extend_from_slice(pred.data());
    }
    Ok(out)
}

/// Prediction at every lead equals the anchor observation.
pub fn persistence_forecast(data: &TrajectoryDataset, t0: usize, horizon: usize) -> Vec<f64> {
    let row = data.row(t0);
    let mut out = Vec::with_capacity(horizon * data.dim);
    for _ in 0..horizon {
        out.extend_from_slice(row);
    }
    out
}

/// Prediction for `t0 + lead` is the climatology field of that calendar
/// day; it depends on the target day only, not on the anchor.
pub fn climatology_forecast(
    series: &GridSeries,
    t0: usize,
    lead: usize,
) -> Result<Vec<f64>, EvalError> {
    series
        .climatology_day(day_of_year(t0 + lead))
        .map(|d| d.to_vec())
        .ok_or(EvalError::MissingClimatology)
}

/// A forecasting strategy evaluated by the protocols below.
pub enum Forecaster<'a> {
    Model(&'a KiaModel),
    Persistence,
    Climatology { climatology: &'a [f64], cells: usize },
}

impl<'a> Forecaster<'a> {
    pub fn label(&self) -> &'static str {
        match self {
            Forecaster::Model(m) => m.variant().as_str(),
            Forecaster::Persistence => "persistence",
            Forecaster::Climatology { .. } => "climatology",
        }
    }

    /// Predictions for steps 1..=horizon from the anchor row.
    pub fn forecast(
        &self,
        data: &TrajectoryDataset,
        anchor: usize,
        horizon: usize,
    ) -> Result<Vec<f64>, EvalError> {
        match self {
            Forecaster::Model(model) => rollout(model, data.row(anchor), horizon),
            Forecaster::Persistence => Ok(persistence_forecast(data, anchor, horizon)),
            Forecaster::Climatology { climatology, cells } => {
                if *cells != data.dim {
                    return Err(EvalError::Config("climatology grid does not match the series"));
                }
                let mut out = Vec::with_capacity(horizon * data.dim);
                for l in 1..=horizon {
                    let d = day_of_year(anchor + l);
                    out.extend_from_slice(&climatology[d * cells..(d + 1) * cells]);
                }
                Ok(out)
            }
        }
    }

    /// Zero-step diagnostic: the model reconstructs, persistence returns the
    /// observation itself, climatology returns the field of the same day.
    pub fn reconstruct(&self, data: &TrajectoryDataset, t: usize) -> Result<Vec<f64>, EvalError> {
        match self {
            Forecaster::Model(model) => {
                let mut tape = Tape::new();
                let x = Tensor::row(data.row(t).to_vec());
                let z = model.encode(&mut tape, &x)?;
                let xhat = model.decode(&mut tape, &z)?;
                Ok(xhat.data().to_vec())
            }
            Forecaster::Persistence => Ok(data.row(t).to_vec()),
            Forecaster::Climatology { climatology, cells } => {
                let d = day_of_year(t);
                Ok(climatology[d * cells..(d + 1) * cells].to_vec())
            }
        }
    }
}

/// Mean and sample standard deviation (zero when fewer than two values).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd {
            mean: f64::NAN,
            std: 0.0,
        };
    }
    let mut sum = 0.0;
    for &v in values {
        sum += v;
    }
    let mean = sum / n as f64;
    if n < 2 {
        return MeanStd { mean, std: 0.0 };
    }
    let mut ss = 0.0;
    for &v in values {
        ss += (v - mean) * (v - mean);
    }
    MeanStd {
        mean,
        std: math::sqrt(ss / (n - 1) as f64),
    }
}

/// Run identification carried into reports.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportMeta {
    pub model: String,
    pub seed: u64,
    pub noise_std: f64,
    /// Initial angle or region, e.g. "theta0=0.8".
    pub label: String,
}

/// Per-step forecast errors over several initial conditions plus the
/// all / first-100 / last-100 aggregates across those initial conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastReport {
    pub horizon: usize,
    pub anchors: Vec<usize>,
    /// One error series per initial condition; NaN marks steps excluded for
    /// zero-norm targets.
    pub errors: Vec<Vec<f64>>,
    pub excluded: usize,
    pub all: MeanStd,
    pub first100: MeanStd,
    pub last100: MeanStd,
    pub meta: ReportMeta,
}

impl ForecastReport {
    /// Mean ± std across initial conditions of the per-condition mean error
    /// over `range` (NaN steps skipped). Aggregates stored on the report are
    /// exactly this recomputation.
    pub fn aggregate(errors: &[Vec<f64>], range: core::ops::Range<usize>) -> MeanStd {
        let mut per_init = Vec::with_capacity(errors.len());
        for series in errors {
            let mut sum = 0.0;
            let mut count = 0usize;
            for &e in &series[range.clone()] {
                if e.is_finite() {
                    sum += e;
                    count += 1;
                }
            }
            if count > 0 {
                per_init.push(sum / count as f64);
            }
        }
        mean_std(&per_init)
    }

    /// Mean over initial conditions of the per-step error (NaN skipped);
    /// used for error-over-horizon curves.
    pub fn mean_curve(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.horizon);
        for l in 0..self.horizon {
            let mut sum = 0.0;
            let mut count = 0usize;
            for series in &self.errors {
                if series[l].is_finite() {
                    sum += series[l];
                    count += 1;
                }
            }
            out.push(if count > 0 { sum / count as f64 } else { f64::NAN });
        }
        out
    }
}

/// Long-horizon protocol settings.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonConfig {
    pub n_inits: usize,
    pub horizon: usize,
    pub metric: ErrorMetric,
    /// Score against the pre-noise series instead of the observed one.
    pub clean_targets: bool,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            n_inits: 30,
            horizon: 2000,
            metric: ErrorMetric::Relative,
            clean_targets: false,
        }
    }
}

/// Rolls out from `n_inits` anchors spread evenly across the valid test
/// range and aggregates per-step errors over all steps, the first 100 and
/// the last 100.
pub fn evaluate_horizon(
    forecaster: &Forecaster,
    data: &TrajectoryDataset,
    config: &HorizonConfig,
    meta: ReportMeta,
) -> Result<ForecastReport, EvalError> {
    let test = data.test_range();
    let len = test.len();
    let required = config.horizon + config.n_inits;
    if len < required {
        return Err(EvalError::TestSplitTooShort { len, required });
    }
    let valid = len - config.horizon;
    let anchors: Vec<usize> = (0..config.n_inits)
        .map(|j| {
            test.start
                + if config.n_inits > 1 {
                    j * (valid - 1) / (config.n_inits - 1)
                } else {
                    0
                }
        })
        .collect();

    let mut errors = Vec::with_capacity(anchors.len());
    let mut excluded = 0usize;
    for &anchor in &anchors {
        let path = forecaster.forecast(data, anchor, config.horizon)?;
        let mut series = Vec::with_capacity(config.horizon);
        for l in 1..=config.horizon {
            let pred = &path[(l - 1) * data.dim..l * data.dim];
            let truth = if config.clean_targets {
                data.clean_row(anchor + l)
            } else {
                data.row(anchor + l)
            };
            let e = match config.metric {
                ErrorMetric::Relative => match relative_error(pred, truth)? {
                    Some(e) => e,
                    None => {
                        excluded += 1;
                        f64::NAN
                    }
                },
                ErrorMetric::CelsiusMae => celsius_mae(pred, truth)?,
            };
            series.push(e);
        }
        errors.push(series);
    }

    let window = config.horizon.min(100);
    let all = ForecastReport::aggregate(&errors, 0..config.horizon);
    let first100 = ForecastReport::aggregate(&errors, 0..window);
    let last100 = ForecastReport::aggregate(&errors, config.horizon - window..config.horizon);
    Ok(ForecastReport {
        horizon: config.horizon,
        anchors,
        errors,
        excluded,
        all,
        first100,
        last100,
        meta,
    })
}

/// Mean Celsius MAE of K-day-ahead forecasts over one test year.
#[derive(Clone, Debug, PartialEq)]
pub struct KDayEntry {
    pub lead: usize,
    pub mean_mae: f64,
    pub days: usize,
    /// Test days skipped because no anchor exists that far back.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KDayTable {
    pub entries: Vec<KDayEntry>,
    pub meta: ReportMeta,
}

/// For each lead K and each day of the test year, forecasts from K days
/// prior and scores the Celsius MAE against the observed field.
pub fn evaluate_k_day(
    forecaster: &Forecaster,
    series: &GridSeries,
    leads: &[usize],
    meta: ReportMeta,
) -> Result<KDayTable, EvalError> {
    let (train, val, test) = series.split_days;
    if test < DAYS_PER_YEAR {
        return Err(EvalError::TestSplitTooShort {
            len: test,
            required: DAYS_PER_YEAR,
        });
    }
    let data = series.as_trajectory();
    let test_start = train + val;
    let mut entries = Vec::with_capacity(leads.len());
    for &lead in leads {
        let mut sum = 0.0;
        let mut days = 0usize;
        let mut skipped = 0usize;
        for t in test_start..test_start + test {
            if lead > t {
                skipped += 1;
                continue;
            }
            let pred = if lead == 0 {
                forecaster.reconstruct(&data, t)?
            } else {
                let path = forecaster.forecast(&data, t - lead, lead)?;
                path[(lead - 1) * data.dim..lead * data.dim].to_vec()
            };
            sum += celsius_mae(&pred, series.day(t))?;
            days += 1;
        }
        entries.push(KDayEntry {
            lead,
            mean_mae: if days > 0 { sum / days as f64 } else { f64::NAN },
            days,
            skipped,
        });
    }
    Ok(KDayTable { entries, meta })
}

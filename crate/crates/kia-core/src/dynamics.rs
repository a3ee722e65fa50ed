//! Data generation: nonlinear pendulum trajectories, the random orthogonal
//! embedding into observation space, Gaussian measurement noise, contiguous
//! chronological splits, and a synthetic seasonal temperature grid with
//! per-calendar-day climatology.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::math;

pub const DAYS_PER_YEAR: usize = 365;

/// Substeps of the RK4 integrator per output interval.
const RK4_SUBSTEPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub enum DataError {
    InvalidParams(&'static str),
    /// Split lengths must partition the number of points exactly.
    BadSplit {
        lengths: (usize, usize, usize),
        n_points: usize,
    },
    NegativeNoiseStd { std: f64 },
    /// The orthogonal embedding expects 2-dimensional source states.
    NotStateSpace { dim: usize },
    /// Training truncation cannot exceed the current training length.
    TruncationTooLarge { size: usize, train_len: usize },
    /// Climatology needs a positive whole number of years of training data.
    BadClimatologyRange { train_days: usize },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
            DataError::BadSplit { lengths, n_points } => write!(
                f,
                "split lengths {lengths:?} do not sum to {n_points} points"
            ),
            DataError::NegativeNoiseStd { std } => write!(f, "noise std must be >= 0, got {std}"),
            DataError::NotStateSpace { dim } => {
                write!(f, "embedding expects 2-dimensional states, got {dim}")
            }
            DataError::TruncationTooLarge { size, train_len } => {
                write!(f, "cannot truncate train split of {train_len} points to {size}")
            }
            DataError::BadClimatologyRange { train_days } => write!(
                f,
                "climatology needs a positive whole number of years, got {train_days} days"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DataError {}

/// Nonlinear pendulum: θ'' = -(g/length)·sin(θ).
#[derive(Clone, Debug, PartialEq)]
pub struct PendulumParams {
    pub theta0: f64,
    pub omega0: f64,
    pub gravity: f64,
    pub length: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            theta0: 0.8,
            omega0: 0.0,
            gravity: 9.8,
            length: 1.0,
            t_start: 0.0,
            t_end: 400.0,
            n_points: 4000,
        }
    }
}

impl PendulumParams {
    fn validate(&self) -> Result<(), DataError> {
        if self.n_points < 2 {
            return Err(DataError::InvalidParams("n_points must be at least 2"));
        }
        if self.length <= 0.0 || self.gravity <= 0.0 {
            return Err(DataError::InvalidParams("length and gravity must be positive"));
        }
        if self.t_end <= self.t_start {
            return Err(DataError::InvalidParams("time span must be nonempty"));
        }
        Ok(())
    }
}

/// Time-ordered observation matrix with split bookkeeping and generation
/// provenance. Rows are observations; the split is contiguous and
/// chronological (train first, then validation, then test).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    /// n_points × dim, row-major.
    pub observations: Vec<f64>,
    pub n_points: usize,
    pub dim: usize,
    /// Seconds between consecutive rows (days for grid-derived series).
    pub dt: f64,
    pub split: (usize, usize, usize),
    /// Orthogonal embedding matrix (dim × 2, row-major) when observations
    /// were lifted from 2-dimensional states.
    pub embedding: Option<Vec<f64>>,
    pub noise_std: f64,
    /// Seed recorded for provenance by whichever stage last used one.
    pub seed: u64,
    /// Pre-noise copy kept for diagnostics; not part of the file format.
    pub clean: Option<Vec<f64>>,
}

impl TrajectoryDataset {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.observations[i * self.dim..(i + 1) * self.dim]
    }

    pub fn train_range(&self) -> core::ops::Range<usize> {
        0..self.split.0
    }

    pub fn val_range(&self) -> core::ops::Range<usize> {
        self.split.0..self.split.0 + self.split.1
    }

    pub fn test_range(&self) -> core::ops::Range<usize> {
        self.split.0 + self.split.1..self.n_points
    }

    /// Row from the pre-noise copy when present, otherwise the observation.
    pub fn clean_row(&self, i: usize) -> &[f64] {
        match &self.clean {
            Some(c) => &c[i * self.dim..(i + 1) * self.dim],
            None => self.row(i),
        }
    }

    /// Drops training rows beyond `size`, keeping validation and test rows
    /// (and their content) unchanged.
    pub fn with_truncated_train(&self, size: usize) -> Result<TrajectoryDataset, DataError> {
        let (train, val, test) = self.split;
        if size > train {
            return Err(DataError::TruncationTooLarge {
                size,
                train_len: train,
            });
        }
        let keep = |data: &Vec<f64>| {
            let mut out = Vec::with_capacity((size + val + test) * self.dim);
            out.extend_from_slice(&data[..size * self.dim]);
            out.extend_from_slice(&data[train * self.dim..]);
            out
        };
        Ok(TrajectoryDataset {
            observations: keep(&self.observations),
            n_points: size + val + test,
            dim: self.dim,
            dt: self.dt,
            split: (size, val, test),
            embedding: self.embedding.clone(),
            noise_std: self.noise_std,
            seed: self.seed,
            clean: self.clean.as_ref().map(keep),
        })
    }
}

fn pendulum_deriv(theta: f64, omega: f64, g_over_l: f64) -> (f64, f64) {
    (omega, -g_over_l * math::sin(theta))
}

/// Integrates the pendulum with classic RK4, emitting `n_points` states
/// (starting at the initial condition) spaced `(t_end - t_start)/n_points`
/// apart, with 100 substeps per output interval.
pub fn simulate_pendulum(params: &PendulumParams) -> Result<TrajectoryDataset, DataError> {
    params.validate()?;
    let n = params.n_points;
    let dt = (params.t_end - params.t_start) / n as f64;
    let h = dt / RK4_SUBSTEPS as f64;
    let g_over_l = params.gravity / params.length;

    let mut observations = Vec::with_capacity(n * 2);
    let (mut theta, mut omega) = (params.theta0, params.omega0);
    observations.push(theta);
    observations.push(omega);
    for _ in 1..n {
        for _ in 0..RK4_SUBSTEPS {
            let (k1t, k1w) = pendulum_deriv(theta, omega, g_over_l);
            let (k2t, k2w) = pendulum_deriv(theta + 0.5 * h * k1t, omega + 0.5 * h * k1w, g_over_l);
            let (k3t, k3w) = pendulum_deriv(theta + 0.5 * h * k2t, omega + 0.5 * h * k2w, g_over_l);
            let (k4t, k4w) = pendulum_deriv(theta + h * k3t, omega + h * k3w, g_over_l);
            theta += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
            omega += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        }
        observations.push(theta);
        observations.push(omega);
    }

    Ok(TrajectoryDataset {
        observations,
        n_points: n,
        dim: 2,
        dt,
        split: (n, 0, 0),
        embedding: None,
        noise_std: 0.0,
        seed: 0,
        clean: None,
    })
}

/// Draws a `dim × 2` standard-normal matrix and orthonormalizes its columns
/// by Gram-Schmidt with one re-orthogonalization pass. Rank-deficient draws
/// retry with the next sub-seed.
fn orthonormal_columns(dim: usize, seed: u64) -> Vec<f64> {
    let mut attempt_seed = seed;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed);
        let mut q: Vec<f64> = (0..dim * 2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

        let norm_col = |q: &[f64], c: usize| {
            let mut s = 0.0;
            for i in 0..dim {
                s += q[i * 2 + c] * q[i * 2 + c];
            }
            math::sqrt(s)
        };
        let n0 = norm_col(&q, 0);
        if n0 < 1e-9 {
            attempt_seed += 1;
            continue;
        }
        for i in 0..dim {
            q[i * 2] /= n0;
        }
        // project out the first column twice before normalizing the second
        for _ in 0..2 {
            let mut dot = 0.0;
            for i in 0..dim {
                dot += q[i * 2] * q[i * 2 + 1];
            }
            for i in 0..dim {
                q[i * 2 + 1] -= dot * q[i * 2];
            }
        }
        let n1 = norm_col(&q, 1);
        if n1 < 1e-9 {
            attempt_seed += 1;
            continue;
        }
        for i in 0..dim {
            q[i * 2 + 1] /= n1;
        }
        return q;
    }
}

/// Lifts 2-dimensional states into `target_dim`-dimensional observations via
/// a seeded random orthogonal map; the map is stored alongside the data.
pub fn orthogonal_embed(
    dataset: &TrajectoryDataset,
    target_dim: usize,
    seed: u64,
) -> Result<TrajectoryDataset, DataError> {
    if dataset.dim != 2 {
        return Err(DataError::NotStateSpace { dim: dataset.dim });
    }
    if target_dim < 2 {
        return Err(DataError::InvalidParams("embedding dimension must be at least 2"));
    }
    let q = orthonormal_columns(target_dim, seed);
    let lift = |src: &Vec<f64>| {
        let mut out = Vec::with_capacity(dataset.n_points * target_dim);
        for i in 0..dataset.n_points {
            let (a, b) = (src[i * 2], src[i * 2 + 1]);
            for r in 0..target_dim {
                out.push(q[r * 2] * a + q[r * 2 + 1] * b);
            }
        }
        out
    };
    let observations = lift(&dataset.observations);
    let clean = dataset.clean.as_ref().map(&lift);
    Ok(TrajectoryDataset {
        observations,
        n_points: dataset.n_points,
        dim: target_dim,
        dt: dataset.dt,
        split: dataset.split,
        embedding: Some(q),
        noise_std: dataset.noise_std,
        seed,
        clean,
    })
}

/// Adds independent N(0, std²) noise to every observation coordinate of all
/// splits, retaining the clean copy for diagnostics.
pub fn add_gaussian_noise(
    dataset: &TrajectoryDataset,
    std: f64,
    seed: u64,
) -> Result<TrajectoryDataset, DataError> {
    if std < 0.0 {
        return Err(DataError::NegativeNoiseStd { std });
    }
    let mut out = dataset.clone();
    out.clean = Some(dataset.observations.clone());
    out.noise_std = std;
    out.seed = seed;
    if std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in out.observations.iter_mut() {
            *v += std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(out)
}

/// Assigns contiguous chronological split lengths (train, validation, test).
pub fn split_dataset(
    dataset: &TrajectoryDataset,
    lengths: (usize, usize, usize),
) -> Result<TrajectoryDataset, DataError> {
    if lengths.0 + lengths.1 + lengths.2 != dataset.n_points {
        return Err(DataError::BadSplit {
            lengths,
            n_points: dataset.n_points,
        });
    }
    let mut out = dataset.clone();
    out.split = lengths;
    Ok(out)
}

/// Synthetic daily temperature grid parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GridParams {
    pub height: usize,
    pub width: usize,
    pub years: usize,
    pub seed: u64,
    /// Standard deviation of the day-to-day weather noise, °C.
    pub weather_std: f64,
    /// Linear interannual drift, °C per year.
    pub drift_per_year: f64,
    pub region: String,
}

impl GridParams {
    pub fn new(height: usize, width: usize, years: usize, seed: u64) -> Self {
        GridParams {
            height,
            width,
            years,
            seed,
            weather_std: 0.3,
            drift_per_year: 0.02,
            region: String::from("synthetic"),
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.height < 4 || self.width < 4 {
            return Err(DataError::InvalidParams("grid must be at least 4×4"));
        }
        if self.years < 3 {
            return Err(DataError::InvalidParams("need at least 3 years of data"));
        }
        if self.weather_std < 0.0 {
            return Err(DataError::NegativeNoiseStd {
                std: self.weather_std,
            });
        }
        Ok(())
    }
}

/// Daily temperature fields with an optional per-calendar-day climatology.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSeries {
    pub days: usize,
    pub height: usize,
    pub width: usize,
    /// days × height × width, row-major.
    pub grid: Vec<f64>,
    pub region: String,
    /// 365 × height × width mean field, derived from training years only.
    pub climatology: Option<Vec<f64>>,
    pub split_days: (usize, usize, usize),
    pub seed: u64,
}

impl GridSeries {
    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn day(&self, t: usize) -> &[f64] {
        let c = self.cells();
        &self.grid[t * c..(t + 1) * c]
    }

    pub fn climatology_day(&self, day_of_year: usize) -> Option<&[f64]> {
        let c = self.cells();
        self.climatology
            .as_ref()
            .map(|clim| &clim[day_of_year * c..(day_of_year + 1) * c])
    }

    /// Flattened view of the grid as a trajectory of height·width-dimensional
    /// observations, one per day, for model training.
    pub fn as_trajectory(&self) -> TrajectoryDataset {
        TrajectoryDataset {
            observations: self.grid.clone(),
            n_points: self.days,
            dim: self.cells(),
            dt: 1.0,
            split: self.split_days,
            embedding: None,
            noise_std: 0.0,
            seed: self.seed,
            clean: None,
        }
    }
}

pub fn day_of_year(t: usize) -> usize {
    t % DAYS_PER_YEAR
}

/// Smooth random field in [-1, 1]: a normalized sum of three seeded plane
/// waves across the grid.
fn smooth_field(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Vec<f64> {
    const WAVES: usize = 3;
    let mut coef = [0.0; WAVES];
    let mut fu = [0.0; WAVES];
    let mut fv = [0.0; WAVES];
    let mut phase = [0.0; WAVES];
    let mut total = 0.0;
    for k in 0..WAVES {
        coef[k] = rng.random_range(0.5..1.0);
        fu[k] = rng.random_range(0.5..2.0);
        fv[k] = rng.random_range(0.5..2.0);
        phase[k] = rng.random_range(0.0..core::f64::consts::TAU);
        total += coef[k];
    }
    let mut out = Vec::with_capacity(height * width);
    for i in 0..height {
        for j in 0..width {
            let mut v = 0.0;
            for k in 0..WAVES {
                let arg = core::f64::consts::TAU
                    * (fu[k] * i as f64 / height as f64 + fv[k] * j as f64 / width as f64)
                    + phase[k];
                v += coef[k] * math::sin(arg);
            }
            out.push(v / total);
        }
    }
    out
}

/// Generates a seasonal temperature grid: a smooth base field plus a
/// spatially varying annual sinusoid, linear interannual drift, and white
/// weather noise, clamped to plausible °C bounds.
pub fn generate_synthetic_sst(params: &GridParams) -> Result<GridSeries, DataError> {
    params.validate()?;
    let (h, w) = (params.height, params.width);
    let days = params.years * DAYS_PER_YEAR;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let base = smooth_field(&mut rng, h, w);
    let amplitude = smooth_field(&mut rng, h, w);
    let phase = smooth_field(&mut rng, h, w);

    let cells = h * w;
    let mut grid = Vec::with_capacity(days * cells);
    for t in 0..days {
        let season = core::f64::consts::TAU * (t % DAYS_PER_YEAR) as f64 / DAYS_PER_YEAR as f64;
        let drift = params.drift_per_year * t as f64 / DAYS_PER_YEAR as f64;
        for c in 0..cells {
            let mean = 18.0 + 6.0 * base[c];
            let amp = 3.0 + 1.5 * amplitude[c];
            let weather: f64 = rng.sample::<f64, _>(StandardNormal) * params.weather_std;
            let value = mean + amp * math::sin(season + core::f64::consts::PI * phase[c]) + drift + weather;
            grid.push(value.clamp(-2.0, 40.0));
        }
    }

    Ok(GridSeries {
        days,
        height: h,
        width: w,
        grid,
        region: params.region.clone(),
        climatology: None,
        split_days: (
            (params.years - 2) * DAYS_PER_YEAR,
            DAYS_PER_YEAR,
            DAYS_PER_YEAR,
        ),
        seed: params.seed,
    })
}

/// Mean field per calendar day over the first `train_days` of the series,
/// which must span a positive whole number of years.
pub fn compute_climatology(series: &GridSeries, train_days: usize) -> Result<Vec<f64>, DataError> {
    if train_days == 0 || !train_days.is_multiple_of(DAYS_PER_YEAR) || train_days > series.days {
        return Err(DataError::BadClimatologyRange { train_days });
    }
    let years = train_days / DAYS_PER_YEAR;
    let cells = series.cells();
    let mut clim = vec![0.0; DAYS_PER_YEAR * cells];
    for y in 0..years {
        for d in 0..DAYS_PER_YEAR {
            let src = series.day(y * DAYS_PER_YEAR + d);
            let dst = &mut clim[d * cells..(d + 1) * cells];
            for (acc, v) in dst.iter_mut().zip(src) {
                *acc += v;
            }
        }
    }
    for v in clim.iter_mut() {
        *v /= years as f64;
    }
    Ok(clim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_stays_at_rest() {
        let params = PendulumParams {
            theta0: 0.0,
            omega0: 0.0,
            n_points: 100,
            t_end: 10.0,
            ..Default::default()
        };
        let ds = simulate_pendulum(&params).unwrap();
        assert!(ds.observations.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_grid_spacing_is_tenth_of_second() {
        let ds = simulate_pendulum(&PendulumParams::default()).unwrap();
        assert_eq!(ds.dt, 0.1);
        assert_eq!(ds.n_points, 4000);
        assert_eq!(ds.dim, 2);
    }

    #[test]
    fn small_angle_period_matches_analytic() {
        let params = PendulumParams {
            theta0: 0.01,
            ..Default::default()
        };
        let ds = simulate_pendulum(&params).unwrap();
        // positive-going zero crossings of theta, linearly interpolated
        let mut crossings = Vec::new();
        for i in 1..ds.n_points {
            let (a, b) = (ds.row(i - 1)[0], ds.row(i)[0]);
            if a < 0.0 && b >= 0.0 {
                let frac = -a / (b - a);
                crossings.push(((i - 1) as f64 + frac) * ds.dt);
            }
        }
        assert!(crossings.len() > 10);
        let measured =
            (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        let analytic = core::f64::consts::TAU * math::sqrt(1.0 / 9.8);
        assert!(
            (measured - analytic).abs() / analytic < 1e-3,
            "period {measured} vs {analytic}"
        );
    }

    #[test]
    fn energy_drift_is_bounded() {
        let params = PendulumParams {
            theta0: 2.4,
            ..Default::default()
        };
        let ds = simulate_pendulum(&params).unwrap();
        let energy = |theta: f64, omega: f64| 0.5 * omega * omega + 9.8 * (1.0 - math::cos(theta));
        let e0 = energy(ds.row(0)[0], ds.row(0)[1]);
        let mut worst = 0.0f64;
        for i in 0..ds.n_points {
            let e = energy(ds.row(i)[0], ds.row(i)[1]);
            worst = worst.max((e - e0).abs() / e0);
        }
        assert!(worst <= 1e-6, "relative energy drift {worst}");
    }

    #[test]
    fn embedding_is_orthonormal_and_reproducible() {
        let q = orthonormal_columns(64, 7);
        let mut gram = [0.0f64; 4];
        for i in 0..64 {
            for a in 0..2 {
                for b in 0..2 {
                    gram[a * 2 + b] += q[i * 2 + a] * q[i * 2 + b];
                }
            }
        }
        assert!((gram[0] - 1.0).abs() <= 1e-10);
        assert!((gram[3] - 1.0).abs() <= 1e-10);
        assert!(gram[1].abs() <= 1e-10);
        assert!(gram[2].abs() <= 1e-10);
        assert_eq!(q, orthonormal_columns(64, 7));
    }

    #[test]
    fn embedding_preserves_norms_and_distances() {
        let ds = simulate_pendulum(&PendulumParams {
            n_points: 50,
            t_end: 5.0,
            ..Default::default()
        })
        .unwrap();
        let lifted = orthogonal_embed(&ds, 64, 3).unwrap();
        assert_eq!(lifted.dim, 64);
        for i in 0..ds.n_points {
            let ns = math::norm2(ds.row(i));
            let nl = math::norm2(lifted.row(i));
            assert!((ns - nl).abs() <= 1e-10);
        }
        let dist = |a: &[f64], b: &[f64]| {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            math::norm2(&d)
        };
        for i in 1..ds.n_points {
            let d2 = dist(ds.row(i), ds.row(i - 1));
            let d64 = dist(lifted.row(i), lifted.row(i - 1));
            assert!((d2 - d64).abs() <= 1e-10);
        }
    }

    #[test]
    fn embedding_rejects_non_state_input() {
        let ds = simulate_pendulum(&PendulumParams {
            n_points: 10,
            t_end: 1.0,
            ..Default::default()
        })
        .unwrap();
        let lifted = orthogonal_embed(&ds, 8, 0).unwrap();
        assert!(matches!(
            orthogonal_embed(&lifted, 8, 0),
            Err(DataError::NotStateSpace { dim: 8 })
        ));
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = simulate_pendulum(&PendulumParams {
            n_points: 20,
            t_end: 2.0,
            ..Default::default()
        })
        .unwrap();
        let noisy = add_gaussian_noise(&ds, 0.0, 5).unwrap();
        assert_eq!(noisy.observations, ds.observations);
        assert_eq!(noisy.clean.as_ref().unwrap(), &ds.observations);
        assert!(matches!(
            add_gaussian_noise(&ds, -0.1, 5),
            Err(DataError::NegativeNoiseStd { .. })
        ));
    }

    #[test]
    fn injected_noise_has_near_zero_mean() {
        let ds = simulate_pendulum(&PendulumParams::default()).unwrap();
        let lifted = orthogonal_embed(&ds, 64, 1).unwrap();
        let noisy = add_gaussian_noise(&lifted, 0.1, 2).unwrap();
        let n = noisy.observations.len();
        let mut sum = 0.0;
        for (a, b) in noisy.observations.iter().zip(noisy.clean.as_ref().unwrap()) {
            sum += a - b;
        }
        let mean = sum / n as f64;
        let bound = 3.0 * 0.1 / math::sqrt(n as f64);
        assert!(mean.abs() < bound, "noise mean {mean} vs bound {bound}");
    }

    #[test]
    fn paper_split_boundaries() {
        let ds = simulate_pendulum(&PendulumParams::default()).unwrap();
        let split = split_dataset(&ds, (400, 1500, 2100)).unwrap();
        assert_eq!(split.train_range(), 0..400);
        assert_eq!(split.val_range(), 400..1900);
        assert_eq!(split.test_range(), 1900..4000);
        assert!(matches!(
            split_dataset(&ds, (400, 1500, 2000)),
            Err(DataError::BadSplit { .. })
        ));
    }

    #[test]
    fn truncation_keeps_test_rows_identical() {
        let ds = simulate_pendulum(&PendulumParams::default()).unwrap();
        let split = split_dataset(&ds, (400, 1500, 2100)).unwrap();
        let truncated = split.with_truncated_train(200).unwrap();
        assert_eq!(truncated.split, (200, 1500, 2100));
        assert_eq!(truncated.n_points, 3800);
        let t0 = truncated.test_range().start;
        let s0 = split.test_range().start;
        for i in 0..2100 {
            assert_eq!(truncated.row(t0 + i), split.row(s0 + i));
        }
        assert!(split.with_truncated_train(500).is_err());
    }

    #[test]
    fn noiseless_grid_repeats_with_annual_period() {
        let mut params = GridParams::new(4, 4, 3, 11);
        params.weather_std = 0.0;
        params.drift_per_year = 0.0;
        let series = generate_synthetic_sst(&params).unwrap();
        for t in 0..DAYS_PER_YEAR {
            assert_eq!(series.day(t), series.day(t + DAYS_PER_YEAR));
            assert_eq!(series.day(t), series.day(t + 2 * DAYS_PER_YEAR));
        }
    }

    #[test]
    fn climatology_of_periodic_field_is_exact() {
        let mut params = GridParams::new(6, 5, 4, 13);
        params.weather_std = 0.0;
        params.drift_per_year = 0.0;
        let series = generate_synthetic_sst(&params).unwrap();
        let clim = compute_climatology(&series, 3 * DAYS_PER_YEAR).unwrap();
        let cells = series.cells();
        let mut total = 0.0;
        for d in 0..DAYS_PER_YEAR {
            let truth = series.day(3 * DAYS_PER_YEAR + d);
            for c in 0..cells {
                total += (clim[d * cells + c] - truth[c]).abs();
            }
        }
        let mae = total / (DAYS_PER_YEAR * cells) as f64;
        assert!(mae < 1e-9, "climatology MAE {mae}");
    }

    #[test]
    fn grid_generation_is_seeded_and_bounded() {
        let params = GridParams::new(8, 8, 3, 4);
        let a = generate_synthetic_sst(&params).unwrap();
        let b = generate_synthetic_sst(&params).unwrap();
        assert_eq!(a.grid, b.grid);
        assert!(a.grid.iter().all(|&v| (-2.0..=40.0).contains(&v)));
        assert!(generate_synthetic_sst(&GridParams::new(2, 8, 3, 0)).is_err());
        assert!(generate_synthetic_sst(&GridParams::new(8, 8, 2, 0)).is_err());
    }

    #[test]
    fn climatology_range_must_be_whole_years() {
        let series = generate_synthetic_sst(&GridParams::new(4, 4, 3, 0)).unwrap();
        assert!(compute_climatology(&series, 100).is_err());
        assert!(compute_climatology(&series, 0).is_err());
        assert!(compute_climatology(&series, 4 * DAYS_PER_YEAR).is_err());
    }
}

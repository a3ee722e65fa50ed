//! Training: reconstruction / forward / backward losses and their weighted
//! combination, multi-step window construction, Adam, and the epoch loop
//! with validation-based early stopping.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::TrajectoryDataset;
use crate::math;
use crate::model::{KiaModel, KoopmanOp, ModelError, Variant};
use crate::tensor::{Tape, Tensor, TensorError};

/// Weights of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub recon: f64,
    pub fwd: f64,
    pub bwd: f64,
    /// Consistency penalty between the paired linear operators (CKAE only).
    pub con: f64,
}

impl LossWeights {
    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Kia => LossWeights {
                recon: 1.0,
                fwd: 1.0,
                bwd: 0.5,
                con: 0.0,
            },
            Variant::Kae => LossWeights {
                recon: 1.0,
                fwd: 1.0,
                bwd: 0.0,
                con: 0.0,
            },
            Variant::Ckae => LossWeights {
                recon: 1.0,
                fwd: 1.0,
                bwd: 0.5,
                con: 0.2,
            },
        }
    }

    fn validate(&self, variant: Variant) -> Result<(), TrainError> {
        let all = [self.recon, self.fwd, self.bwd, self.con];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TrainError::Config("loss weights must be finite and nonnegative"));
        }
        if variant == Variant::Kae && self.bwd > 0.0 {
            return Err(TrainError::Config(
                "KAE is a forward-only baseline; set the backward weight to 0",
            ));
        }
        if variant != Variant::Ckae && self.con > 0.0 {
            return Err(TrainError::Config(
                "the consistency weight applies to CKAE only",
            ));
        }
        Ok(())
    }
}

/// Optimizer and schedule settings for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Multi-step prediction horizon k.
    pub k_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Consecutive epochs without validation improvement tolerated.
    pub patience: usize,
    /// Seed of the per-epoch anchor shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_steps: 16,
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 500,
            patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.k_steps == 0 {
            return Err(TrainError::Config("k_steps must be at least 1"));
        }
        if self.patience == 0 {
            return Err(TrainError::Config("patience must be at least 1"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::Config("batch_size and max_epochs must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    Model(ModelError),
    Tensor(TensorError),
    Config(&'static str),
    /// A split cannot host any window of the requested horizon.
    SplitTooShort {
        split: &'static str,
        len: usize,
        required: usize,
    },
    EmptyBatch,
    /// A window carried the wrong number of targets.
    TargetCount { expected: usize, got: usize },
    /// A loss component left the finite range; training aborted.
    Diverged { epoch: usize, component: &'static str },
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Tensor(e)
    }
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Tensor(e) => write!(f, "{e}"),
            TrainError::Config(msg) => write!(f, "configuration error: {msg}"),
            TrainError::SplitTooShort {
                split,
                len,
                required,
            } => write!(
                f,
                "{split} split of {len} points is too short, need at least {required}"
            ),
            TrainError::EmptyBatch => write!(f, "batch must contain at least one window"),
            TrainError::TargetCount { expected, got } => {
                write!(f, "window carries {got} targets, expected {expected}")
            }
            TrainError::Diverged { epoch, component } => {
                write!(f, "training diverged at epoch {epoch}: {component} loss is not finite")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

/// Which neighbouring rows a window anchor must be able to reach.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    Both,
}

/// Anchor indices (relative to the split start) whose k-step windows stay
/// entirely inside a split of the given length.
pub fn build_windows(len: usize, k: usize, direction: Direction) -> Result<Vec<usize>, TrainError> {
    let (lo, hi, required) = match direction {
        Direction::Forward => (0usize, len.saturating_sub(k + 1), k + 1),
        Direction::Backward => (k, len.saturating_sub(1), k + 1),
        Direction::Both => (k, len.saturating_sub(k + 1), 2 * k + 1),
    };
    if len < required {
        return Err(TrainError::SplitTooShort {
            split: "window",
            len,
            required,
        });
    }
    Ok((lo..=hi).collect())
}

/// Rows `anchor + shift` for every anchor, stacked into an n×m batch.
fn gather(
    data: &TrajectoryDataset,
    anchors: &[usize],
    shift: i64,
) -> Result<Tensor, TrainError> {
    if anchors.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let m = data.dim;
    let mut out = Vec::with_capacity(anchors.len() * m);
    for &a in anchors {
        let row = (a as i64 + shift) as usize;
        out.extend_from_slice(data.row(row));
    }
    Ok(Tensor::matrix(anchors.len(), m, out)?)
}

/// Mean over the batch of squared reconstruction residual norms:
/// (1/n)·Σ ‖decode(encode(x)) − x‖².
pub fn loss_recon(model: &KiaModel, tape: &mut Tape, x: &Tensor) -> Result<Tensor, TrainError> {
    let z = model.encode(tape, x)?;
    let xhat = model.decode(tape, &z)?;
    let mse = tape.mse(&xhat, x)?;
    Ok(tape.scale(&mse, model.input_dim() as f64)?)
}

fn multi_step_loss(
    model: &KiaModel,
    tape: &mut Tape,
    x: &Tensor,
    targets: &[Tensor],
    inverse: bool,
) -> Result<Tensor, TrainError> {
    if targets.is_empty() {
        return Err(TrainError::TargetCount {
            expected: 1,
            got: 0,
        });
    }
    let m = model.input_dim() as f64;
    let z = model.encode(tape, x)?;
    let mut z_step = z;
    let mut acc: Option<Tensor> = None;
    for target in targets {
        z_step = if inverse {
            model.koopman_inverse(tape, &z_step)?
        } else {
            model.koopman_forward(tape, &z_step)?
        };
        let pred = model.decode(tape, &z_step)?;
        let mse = tape.mse(&pred, target)?;
        let term = tape.scale(&mse, m)?;
        acc = Some(match acc {
            Some(prev) => tape.add(&prev, &term)?,
            None => term,
        });
    }
    let sum = acc.expect("targets nonempty");
    Ok(tape.scale(&sum, 1.0 / targets.len() as f64)?)
}

/// Multi-step forward prediction loss; `targets[l-1]` holds the batch of
/// rows l steps ahead of `x`. The latent state advances incrementally, one
/// operator application per step.
pub fn loss_forward(
    model: &KiaModel,
    tape: &mut Tape,
    x: &Tensor,
    targets: &[Tensor],
) -> Result<Tensor, TrainError> {
    multi_step_loss(model, tape, x, targets, false)
}

/// Multi-step backward prediction loss; `targets[l-1]` holds the rows l
/// steps in the past. Rejected by the forward-only baseline.
pub fn loss_backward(
    model: &KiaModel,
    tape: &mut Tape,
    x: &Tensor,
    targets: &[Tensor],
) -> Result<Tensor, TrainError> {
    multi_step_loss(model, tape, x, targets, true)
}

/// Consistency penalty tying the paired linear operators to each other:
/// ‖K·K_b − I‖²_F + ‖K_b·K − I‖²_F.
pub fn consistency_loss(model: &KiaModel, tape: &mut Tape) -> Result<Tensor, TrainError> {
    let KoopmanOp::Linear(lin) = &model.koopman else {
        return Err(TrainError::Config("consistency loss needs a linear operator pair"));
    };
    let Some(back) = &lin.backward_map else {
        return Err(TrainError::Config("consistency loss needs a backward operator"));
    };
    let d = model.latent_dim();
    let mut eye = vec![0.0; d * d];
    for i in 0..d {
        eye[i * d + i] = 1.0;
    }
    let eye = Tensor::matrix(d, d, eye)?;
    let n = (d * d) as f64;
    let fb = tape.matmul(&lin.forward_map, back)?;
    let bf = tape.matmul(back, &lin.forward_map)?;
    let mse_fb = tape.mse(&fb, &eye)?;
    let mse_bf = tape.mse(&bf, &eye)?;
    let sum = tape.add(&mse_fb, &mse_bf)?;
    Ok(tape.scale(&sum, n)?)
}

/// Weighted sum of loss components; exactly the declared terms, nothing else.
pub fn total_loss(
    tape: &mut Tape,
    weights: &LossWeights,
    recon: &Tensor,
    fwd: &Tensor,
    bwd: Option<&Tensor>,
    con: Option<&Tensor>,
) -> Result<Tensor, TrainError> {
    let mut total = tape.scale(recon, weights.recon)?;
    let fw = tape.scale(fwd, weights.fwd)?;
    total = tape.add(&total, &fw)?;
    if let Some(b) = bwd {
        let bw = tape.scale(b, weights.bwd)?;
        total = tape.add(&total, &bw)?;
    }
    if let Some(c) = con {
        let cw = tape.scale(c, weights.con)?;
        total = tape.add(&total, &cw)?;
    }
    Ok(total)
}

/// Scalar values of the loss components for one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub recon: f64,
    pub fwd: f64,
    pub bwd: f64,
    pub con: f64,
    pub total: f64,
}

impl LossValues {
    fn non_finite_component(&self) -> Option<&'static str> {
        [
            (self.recon, "reconstruction"),
            (self.fwd, "forward"),
            (self.bwd, "backward"),
            (self.con, "consistency"),
            (self.total, "total"),
        ]
        .into_iter()
        .find(|(v, _)| !v.is_finite())
        .map(|(_, name)| name)
    }
}

/// Evaluates the combined objective on one batch of anchors, sharing a
/// single encoder pass between the reconstruction and prediction terms.
/// Components with zero weight are skipped.
pub fn batch_losses(
    model: &KiaModel,
    tape: &mut Tape,
    data: &TrajectoryDataset,
    anchors: &[usize],
    k: usize,
    weights: &LossWeights,
) -> Result<(Tensor, LossValues), TrainError> {
    let x = gather(data, anchors, 0)?;
    let m = model.input_dim() as f64;

    let z = model.encode(tape, &x)?;
    let xhat = model.decode(tape, &z)?;
    let recon_mse = tape.mse(&xhat, &x)?;
    let recon = tape.scale(&recon_mse, m)?;

    let step_loss = |tape: &mut Tape, inverse: bool| -> Result<Tensor, TrainError> {
        let mut z_step = z.clone();
        let mut acc: Option<Tensor> = None;
        for l in 1..=k {
            let shift = if inverse { -(l as i64) } else { l as i64 };
            let target = gather(data, anchors, shift)?;
            z_step = if inverse {
                model.koopman_inverse(tape, &z_step)?
            } else {
                model.koopman_forward(tape, &z_step)?
            };
            let pred = model.decode(tape, &z_step)?;
            let mse = tape.mse(&pred, &target)?;
            let term = tape.scale(&mse, m)?;
            acc = Some(match acc {
                Some(prev) => tape.add(&prev, &term)?,
                None => term,
            });
        }
        Ok(tape.scale(&acc.expect("k >= 1"), 1.0 / k as f64)?)
    };

    let fwd = step_loss(tape, false)?;
    let bwd = if weights.bwd > 0.0 {
        Some(step_loss(tape, true)?)
    } else {
        None
    };
    let con = if weights.con > 0.0 {
        Some(consistency_loss(model, tape)?)
    } else {
        None
    };

    let total = total_loss(tape, weights, &recon, &fwd, bwd.as_ref(), con.as_ref())?;
    let values = LossValues {
        recon: recon.item()?,
        fwd: fwd.item()?,
        bwd: bwd.as_ref().map(|t| t.item()).transpose()?.unwrap_or(0.0),
        con: con.as_ref().map(|t| t.item()).transpose()?.unwrap_or(0.0),
        total: total.item()?,
    };
    Ok((total, values))
}

/// Adam moment buffers, one slot per parameter tensor in declaration order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }
}

impl AdamState {
    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over all model parameters. `grads` must hold one entry
/// per parameter tensor in declaration order.
pub fn adam_step(
    model: &mut KiaModel,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    let sizes: Vec<usize> = {
        let mut s = Vec::new();
        model.visit_params(&mut |t| s.push(t.numel()));
        s
    };
    if grads.len() != sizes.len() || grads.iter().zip(&sizes).any(|(g, &n)| g.len() != n) {
        return Err(TrainError::Config("gradient layout does not match parameters"));
    }
    if state.first.is_empty() {
        state.first = sizes.iter().map(|&n| vec![0.0; n]).collect();
        state.second = sizes.iter().map(|&n| vec![0.0; n]).collect();
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - math::powi(state.beta1, t);
    let bias2 = 1.0 - math::powi(state.beta2, t);

    let mut idx = 0;
    let (beta1, beta2, eps) = (state.beta1, state.beta2, state.epsilon);
    let (first, second) = (&mut state.first, &mut state.second);
    model.visit_params_mut(&mut |param| {
        let g = &grads[idx];
        let m = &mut first[idx];
        let v = &mut second[idx];
        for (j, value) in param.data_mut().iter_mut().enumerate() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            *value -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
        idx += 1;
    });
    Ok(())
}

/// Per-epoch loss record (training components and validation total).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub recon: f64,
    pub fwd: f64,
    pub bwd: f64,
    pub con: f64,
    pub total_train: f64,
    pub total_val: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
}

/// Improvement must beat the best seen value by this margin to reset the
/// early-stopping counter.
const IMPROVEMENT_TOL: f64 = 1e-12;

/// Trains in place, shuffling anchors each epoch with the seeded generator,
/// and restores the parameters of the best validation epoch before
/// returning.
pub fn train(
    model: &mut KiaModel,
    data: &TrajectoryDataset,
    config: &TrainConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    weights.validate(model.variant())?;
    if data.dim != model.input_dim() {
        return Err(TrainError::Model(ModelError::DimMismatch {
            what: "dataset observation",
            expected: model.input_dim(),
            got: data.dim,
        }));
    }
    let (train_len, val_len, _) = data.split;
    let direction = if weights.bwd > 0.0 {
        Direction::Both
    } else {
        Direction::Forward
    };
    let k = config.k_steps;
    let train_anchors: Vec<usize> = build_windows(train_len, k, direction)
        .map_err(|_| TrainError::SplitTooShort {
            split: "training",
            len: train_len,
            required: if direction == Direction::Both { 2 * k + 1 } else { k + 1 },
        })?;
    let val_anchors: Vec<usize> = build_windows(val_len, k, direction)
        .map_err(|_| TrainError::SplitTooShort {
            split: "validation",
            len: val_len,
            required: if direction == Direction::Both { 2 * k + 1 } else { k + 1 },
        })?
        .into_iter()
        .map(|a| a + train_len)
        .collect();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::default();
    let mut anchors = train_anchors;
    let mut history = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.params_flat();
    let mut bad_epochs = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        anchors.shuffle(&mut shuffle_rng);
        let mut sums = LossValues::default();
        let mut seen = 0usize;
        for batch in anchors.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let (total, values) = batch_losses(&bound, &mut tape, data, batch, k, weights)?;
            if let Some(component) = values.non_finite_component() {
                return Err(TrainError::Diverged { epoch, component });
            }
            let grads = tape.backward(&total)?;
            let mut per_param: Vec<Vec<f64>> = Vec::new();
            bound.visit_params(&mut |t| {
                let g = grads
                    .get(t)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; t.numel()]);
                per_param.push(g);
            });
            adam_step(model, &per_param, &mut adam, config.learning_rate)?;

            let w = batch.len() as f64;
            sums.recon += values.recon * w;
            sums.fwd += values.fwd * w;
            sums.bwd += values.bwd * w;
            sums.con += values.con * w;
            sums.total += values.total * w;
            seen += batch.len();
        }
        let n = seen as f64;

        let mut val_sum = 0.0;
        for batch in val_anchors.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let (_, values) = batch_losses(model, &mut tape, data, batch, k, weights)?;
            val_sum += values.total * batch.len() as f64;
        }
        let total_val = val_sum / val_anchors.len() as f64;
        if !total_val.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                component: "validation",
            });
        }

        history.push(EpochStats {
            epoch,
            recon: sums.recon / n,
            fwd: sums.fwd / n,
            bwd: sums.bwd / n,
            con: sums.con / n,
            total_train: sums.total / n,
            total_val,
        });

        if total_val < best_val - IMPROVEMENT_TOL {
            best_val = total_val;
            best_epoch = epoch;
            best_params = model.params_flat();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    model.set_params_flat(&best_params)?;
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val,
        stopped_early,
    })
}

/// Worst relative error between analytic and central-difference gradients of
/// the combined objective, over every parameter coordinate of the model.
pub fn check_objective_gradients(
    model: &KiaModel,
    data: &TrajectoryDataset,
    anchors: &[usize],
    k: usize,
    weights: &LossWeights,
    eps: f64,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let (total, _) = batch_losses(&bound, &mut tape, data, anchors, k, weights)?;
    let grads = tape.backward(&total)?;
    let mut analytic = Vec::with_capacity(model.param_count());
    bound.visit_params(&mut |t| match grads.get(t) {
        Some(g) => analytic.extend_from_slice(g),
        None => analytic.extend(core::iter::repeat_n(0.0, t.numel())),
    });

    let base = model.params_flat();
    let eval = |params: &[f64]| -> Result<f64, TrainError> {
        let mut probe = model.clone();
        probe.set_params_flat(params)?;
        let mut scratch = Tape::new();
        let (_, values) = batch_losses(&probe, &mut scratch, data, anchors, k, weights)?;
        Ok(values.total)
    };

    let mut worst = 0.0f64;
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + eps;
        let plus = eval(&params)?;
        params[i] = base[i] - eps;
        let minus = eval(&params)?;
        params[i] = base[i];
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = math::abs(analytic[i]).max(1.0);
        worst = worst.max(math::abs(analytic[i] - numeric) / denom);
    }
    Ok(worst)
}

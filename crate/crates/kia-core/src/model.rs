//! Network components: encoder/decoder stacks, the invertible
//! additive-coupling Koopman operator, and the linear Koopman baselines.
//!
//! The coupling operator splits the latent vector into two halves and shifts
//! each half by a bias-free linear function of the other. Each shift is
//! subtracted in closed form on the way back, so the inverse is exact up to
//! floating-point rounding, and with linear shift maps the composed operator
//! is itself linear.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::tensor::{Tape, Tensor, TensorError};

/// Model family: the invertible-coupling operator, the forward-only linear
/// baseline, or the paired forward/backward linear baseline.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Variant {
    Kia,
    Kae,
    Ckae,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Kia => "KIA",
            Variant::Kae => "KAE",
            Variant::Ckae => "CKAE",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s.to_ascii_uppercase().as_str() {
            "KIA" => Some(Variant::Kia),
            "KAE" => Some(Variant::Kae),
            "CKAE" | "C-KAE" => Some(Variant::Ckae),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    Tensor(TensorError),
    /// The coupling operator needs an even latent dimension.
    OddLatentDim { dim: usize },
    /// Coupling depth must be at least one block.
    ZeroDepth,
    /// An input did not match the declared model dimension.
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Negative Koopman powers are undefined for the forward-only baseline.
    BackwardUnsupported { variant: Variant },
    BadNormalizer { reason: &'static str },
    /// Parameter blob length does not match the architecture.
    ParamCount { expected: usize, got: usize },
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Tensor(e)
    }
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Tensor(e) => write!(f, "{e}"),
            ModelError::OddLatentDim { dim } => {
                write!(f, "coupling operator needs an even latent dimension, got {dim}")
            }
            ModelError::ZeroDepth => write!(f, "coupling depth must be at least 1"),
            ModelError::DimMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected dimension {expected}, got {got}"),
            ModelError::BackwardUnsupported { variant } => {
                write!(f, "{variant} supports forward evolution only")
            }
            ModelError::BadNormalizer { reason } => write!(f, "bad normalizer: {reason}"),
            ModelError::ParamCount { expected, got } => {
                write!(f, "parameter blob has {got} values, architecture needs {expected}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// One dense layer: `y = x·W + b`, optionally followed by tanh.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    /// Weight matrix stored as [in, out].
    pub weight: Tensor,
    /// Bias row, [1, out].
    pub bias: Tensor,
    pub activation: bool,
}

/// Feed-forward stack with tanh after every hidden layer and a linear last
/// layer.
#[derive(Clone, Debug)]
pub struct DenseStack {
    pub layers: Vec<DenseLayer>,
}

impl DenseStack {
    /// `dims` chains input through hidden sizes to the output dimension.
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight = Tensor::param(
                vec![fan_in, fan_out],
                glorot_uniform(rng, fan_in, fan_out, fan_in * fan_out),
            )
            .expect("checked dims");
            let bias = Tensor::param(vec![1, fan_out], vec![0.0; fan_out]).expect("checked dims");
            layers.push(DenseLayer {
                weight,
                bias,
                activation: true,
            });
        }
        if let Some(last) = layers.last_mut() {
            last.activation = false;
        }
        DenseStack { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.shape()[1]
    }

    /// Batch forward pass on x[n×in].
    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, ModelError> {
        let mut h = x.clone();
        for layer in &self.layers {
            let lin = tape.matmul(&h, &layer.weight)?;
            h = tape.add_bias(&lin, &layer.bias)?;
            if layer.activation {
                h = tape.tanh(&h)?;
            }
        }
        Ok(h)
    }
}

/// Additive coupling block on an even-dimensional latent. The shift maps
/// `t1`, `t2` are square [d/2, d/2] linear maps, bias-free by default.
#[derive(Clone, Debug)]
pub struct CouplingBlock {
    pub t1: Tensor,
    pub t2: Tensor,
    pub b1: Option<Tensor>,
    pub b2: Option<Tensor>,
}

impl CouplingBlock {
    fn new(half: usize, with_bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let t1 = Tensor::param(vec![half, half], glorot_uniform(rng, half, half, half * half))
            .expect("checked dims");
        let b1 = with_bias
            .then(|| Tensor::param(vec![1, half], vec![0.0; half]).expect("checked dims"));
        let t2 = Tensor::param(vec![half, half], glorot_uniform(rng, half, half, half * half))
            .expect("checked dims");
        let b2 = with_bias
            .then(|| Tensor::param(vec![1, half], vec![0.0; half]).expect("checked dims"));
        CouplingBlock { t1, b1, t2, b2 }
    }

    fn zeroed(half: usize, with_bias: bool) -> Self {
        let zero = || Tensor::param(vec![half, half], vec![0.0; half * half]).expect("checked dims");
        let bias = || Tensor::param(vec![1, half], vec![0.0; half]).expect("checked dims");
        CouplingBlock {
            t1: zero(),
            b1: with_bias.then(bias),
            t2: zero(),
            b2: with_bias.then(bias),
        }
    }

    fn shift(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        map: &Tensor,
        bias: &Option<Tensor>,
    ) -> Result<Tensor, ModelError> {
        let y = tape.matmul(x, map)?;
        Ok(match bias {
            Some(b) => tape.add_bias(&y, b)?,
            None => y,
        })
    }

    /// v1 = z1 + t2(z2); v2 = z2 + t1(v1).
    pub fn forward(&self, tape: &mut Tape, z: &Tensor) -> Result<Tensor, ModelError> {
        let half = self.t1.shape()[0];
        let z1 = tape.narrow_cols(z, 0, half)?;
        let z2 = tape.narrow_cols(z, half, half)?;
        let s2 = self.shift(tape, &z2, &self.t2, &self.b2)?;
        let v1 = tape.add(&z1, &s2)?;
        let s1 = self.shift(tape, &v1, &self.t1, &self.b1)?;
        let v2 = tape.add(&z2, &s1)?;
        Ok(tape.concat_cols(&v1, &v2)?)
    }

    /// z2 = v2 - t1(v1); z1 = v1 - t2(z2). Exact inverse of `forward`.
    pub fn inverse(&self, tape: &mut Tape, v: &Tensor) -> Result<Tensor, ModelError> {
        let half = self.t1.shape()[0];
        let v1 = tape.narrow_cols(v, 0, half)?;
        let v2 = tape.narrow_cols(v, half, half)?;
        let s1 = self.shift(tape, &v1, &self.t1, &self.b1)?;
        let z2 = tape.sub(&v2, &s1)?;
        let s2 = self.shift(tape, &z2, &self.t2, &self.b2)?;
        let z1 = tape.sub(&v1, &s2)?;
        Ok(tape.concat_cols(&z1, &z2)?)
    }
}

/// Stack of coupling blocks acting as the latent evolution operator.
#[derive(Clone, Debug)]
pub struct InnKoopman {
    pub blocks: Vec<CouplingBlock>,
}

impl InnKoopman {
    /// Random shift maps; used where a generic invertible operator is
    /// wanted (property suites, round-trip checks).
    pub fn new(
        latent_dim: usize,
        depth: usize,
        with_bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        Self::check(latent_dim, depth)?;
        let half = latent_dim / 2;
        let blocks = (0..depth)
            .map(|_| CouplingBlock::new(half, with_bias, rng))
            .collect();
        Ok(InnKoopman { blocks })
    }

    /// Zero shift maps: the operator starts as the identity. Training models
    /// start here so that the initial operator spectrum sits on the unit
    /// circle; random shifts give operators whose powers explode or decay
    /// over long rollouts.
    pub fn identity(latent_dim: usize, depth: usize, with_bias: bool) -> Result<Self, ModelError> {
        Self::check(latent_dim, depth)?;
        let half = latent_dim / 2;
        let blocks = (0..depth).map(|_| CouplingBlock::zeroed(half, with_bias)).collect();
        Ok(InnKoopman { blocks })
    }

    fn check(latent_dim: usize, depth: usize) -> Result<(), ModelError> {
        if !latent_dim.is_multiple_of(2) || latent_dim == 0 {
            return Err(ModelError::OddLatentDim { dim: latent_dim });
        }
        if depth == 0 {
            return Err(ModelError::ZeroDepth);
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, z: &Tensor) -> Result<Tensor, ModelError> {
        let mut out = z.clone();
        for block in &self.blocks {
            out = block.forward(tape, &out)?;
        }
        Ok(out)
    }

    pub fn inverse(&self, tape: &mut Tape, v: &Tensor) -> Result<Tensor, ModelError> {
        let mut out = v.clone();
        for block in self.blocks.iter().rev() {
            out = block.inverse(tape, &out)?;
        }
        Ok(out)
    }
}

/// Linear latent operator baseline: a single d×d matrix, optionally paired
/// with an independent backward matrix.
#[derive(Clone, Debug)]
pub struct LinearKoopman {
    pub forward_map: Tensor,
    pub backward_map: Option<Tensor>,
}

impl LinearKoopman {
    /// Starts at the identity matrix for the same spectral reason as
    /// [`InnKoopman::identity`].
    fn identity(latent_dim: usize, paired: bool) -> Self {
        let eye = || {
            let mut data = vec![0.0; latent_dim * latent_dim];
            for i in 0..latent_dim {
                data[i * latent_dim + i] = 1.0;
            }
            Tensor::param(vec![latent_dim, latent_dim], data).expect("checked dims")
        };
        LinearKoopman {
            forward_map: eye(),
            backward_map: paired.then(eye),
        }
    }
}

#[derive(Clone, Debug)]
pub enum KoopmanOp {
    Inn(InnKoopman),
    Linear(LinearKoopman),
}

/// Architecture description; the checkpoint header mirrors these fields.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub coupling_depth: usize,
    pub coupling_bias: bool,
    pub variant: Variant,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults used throughout: latent 8, hidden (128, 64), two coupling
    /// blocks without bias.
    pub fn new(input_dim: usize, variant: Variant, seed: u64) -> Self {
        ModelConfig {
            input_dim,
            latent_dim: 8,
            encoder_hidden: vec![128, 64],
            coupling_depth: 2,
            coupling_bias: false,
            variant,
            seed,
        }
    }
}

/// Fixed affine input standardization baked into a model: the encoder sees
/// `(x - shift) / scale` and the decoder output is mapped back. Identity by
/// default; set from training-split statistics for data far from unit scale
/// (raw °C fields saturate the tanh stacks otherwise). Not trainable and not
/// part of the parameter blob.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub shift: Vec<f64>,
    pub scale: f64,
}

/// Encoder + latent Koopman operator + decoder.
#[derive(Clone, Debug)]
pub struct KiaModel {
    pub config: ModelConfig,
    pub encoder: DenseStack,
    pub koopman: KoopmanOp,
    pub decoder: DenseStack,
    pub normalizer: Option<Normalizer>,
}

impl KiaModel {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut enc_dims = vec![config.input_dim];
        enc_dims.extend_from_slice(&config.encoder_hidden);
        enc_dims.push(config.latent_dim);
        let mut dec_dims: Vec<usize> = enc_dims.clone();
        dec_dims.reverse();

        let encoder = DenseStack::new(&enc_dims, &mut rng);
        let koopman = match config.variant {
            Variant::Kia => KoopmanOp::Inn(InnKoopman::identity(
                config.latent_dim,
                config.coupling_depth,
                config.coupling_bias,
            )?),
            Variant::Kae => KoopmanOp::Linear(LinearKoopman::identity(config.latent_dim, false)),
            Variant::Ckae => KoopmanOp::Linear(LinearKoopman::identity(config.latent_dim, true)),
        };
        let decoder = DenseStack::new(&dec_dims, &mut rng);
        Ok(KiaModel {
            config,
            encoder,
            koopman,
            decoder,
            normalizer: None,
        })
    }

    /// Installs the fixed input standardization. `shift` must have the input
    /// dimension; `scale` must be positive.
    pub fn set_normalizer(&mut self, shift: Vec<f64>, scale: f64) -> Result<(), ModelError> {
        if shift.len() != self.config.input_dim {
            return Err(ModelError::DimMismatch {
                what: "normalizer shift",
                expected: self.config.input_dim,
                got: shift.len(),
            });
        }
        if scale <= 0.0 || scale.is_nan() || !scale.is_finite() {
            return Err(ModelError::BadNormalizer {
                reason: "scale must be positive and finite",
            });
        }
        self.normalizer = Some(Normalizer { shift, scale });
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Observation batch x[n×m] to latent z[n×d].
    pub fn encode(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, ModelError> {
        let got = x.shape().last().copied().unwrap_or(0);
        if x.shape().len() != 2 || got != self.config.input_dim {
            return Err(ModelError::DimMismatch {
                what: "encode input",
                expected: self.config.input_dim,
                got,
            });
        }
        let standardized = match &self.normalizer {
            Some(norm) => {
                let neg_shift = Tensor::row(norm.shift.iter().map(|s| -s).collect());
                let centered = tape.add_bias(x, &neg_shift)?;
                tape.scale(&centered, 1.0 / norm.scale)?
            }
            None => x.clone(),
        };
        self.encoder.forward(tape, &standardized)
    }

    /// Latent batch z[n×d] back to observation space.
    pub fn decode(&self, tape: &mut Tape, z: &Tensor) -> Result<Tensor, ModelError> {
        let got = z.shape().last().copied().unwrap_or(0);
        if z.shape().len() != 2 || got != self.config.latent_dim {
            return Err(ModelError::DimMismatch {
                what: "decode input",
                expected: self.config.latent_dim,
                got,
            });
        }
        let out = self.decoder.forward(tape, z)?;
        Ok(match &self.normalizer {
            Some(norm) => {
                let rescaled = tape.scale(&out, norm.scale)?;
                let shift = Tensor::row(norm.shift.clone());
                tape.add_bias(&rescaled, &shift)?
            }
            None => out,
        })
    }

    /// One forward application of the latent operator.
    pub fn koopman_forward(&self, tape: &mut Tape, z: &Tensor) -> Result<Tensor, ModelError> {
        match &self.koopman {
            KoopmanOp::Inn(inn) => inn.forward(tape, z),
            KoopmanOp::Linear(lin) => Ok(tape.matmul(z, &lin.forward_map)?),
        }
    }

    /// One backward application of the latent operator.
    pub fn koopman_inverse(&self, tape: &mut Tape, z: &Tensor) -> Result<Tensor, ModelError> {
        match &self.koopman {
            KoopmanOp::Inn(inn) => inn.inverse(tape, z),
            KoopmanOp::Linear(lin) => match &lin.backward_map {
                Some(back) => Ok(tape.matmul(z, back)?),
                None => Err(ModelError::BackwardUnsupported {
                    variant: self.config.variant,
                }),
            },
        }
    }

    /// Applies the latent operator `steps` times; negative steps run the
    /// inverse. `steps == 0` returns the input unchanged.
    pub fn koopman_power(&self, tape: &mut Tape, z: &Tensor, steps: i64) -> Result<Tensor, ModelError> {
        let mut out = z.clone();
        if steps >= 0 {
            for _ in 0..steps {
                out = self.koopman_forward(tape, &out)?;
            }
        } else {
            for _ in 0..steps.unsigned_abs() {
                out = self.koopman_inverse(tape, &out)?;
            }
        }
        Ok(out)
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&Tensor)) {
        for layer in &self.encoder.layers {
            f(&layer.weight);
            f(&layer.bias);
        }
        match &self.koopman {
            KoopmanOp::Inn(inn) => {
                for block in &inn.blocks {
                    f(&block.t1);
                    if let Some(b) = &block.b1 {
                        f(b);
                    }
                    f(&block.t2);
                    if let Some(b) = &block.b2 {
                        f(b);
                    }
                }
            }
            KoopmanOp::Linear(lin) => {
                f(&lin.forward_map);
                if let Some(back) = &lin.backward_map {
                    f(back);
                }
            }
        }
        for layer in &self.decoder.layers {
            f(&layer.weight);
            f(&layer.bias);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        for layer in &mut self.encoder.layers {
            f(&mut layer.weight);
            f(&mut layer.bias);
        }
        match &mut self.koopman {
            KoopmanOp::Inn(inn) => {
                for block in &mut inn.blocks {
                    f(&mut block.t1);
                    if let Some(b) = &mut block.b1 {
                        f(b);
                    }
                    f(&mut block.t2);
                    if let Some(b) = &mut block.b2 {
                        f(b);
                    }
                }
            }
            KoopmanOp::Linear(lin) => {
                f(&mut lin.forward_map);
                if let Some(back) = &mut lin.backward_map {
                    f(back);
                }
            }
        }
        for layer in &mut self.decoder.layers {
            f(&mut layer.weight);
            f(&mut layer.bias);
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |t| n += t.numel());
        n
    }

    /// All parameters concatenated in declaration order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_params(&mut |t| out.extend_from_slice(t.data()));
        out
    }

    /// Restores parameters from a flat blob in declaration order.
    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.param_count() {
            return Err(ModelError::ParamCount {
                expected: self.param_count(),
                got: values.len(),
            });
        }
        let mut offset = 0;
        self.visit_params_mut(&mut |t| {
            let n = t.numel();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        });
        Ok(())
    }

    /// Copy of the model with every parameter registered on the tape, for
    /// one training step.
    pub fn bind(&self, tape: &mut Tape) -> KiaModel {
        let mut bound = self.clone();
        bound.visit_params_mut(&mut |t| *t = tape.watch(t));
        bound
    }
}

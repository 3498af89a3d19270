//! Single-hidden-layer network mapping moments to a parameter estimate and,
//! optionally, its covariance.
//!
//! Parameters are stored flat: input-to-hidden weights (row per hidden unit),
//! hidden biases, hidden-to-output weights (row per raw output), output biases.
//! Inputs are z-scored with training-set statistics. Raw outputs pass through a
//! fixed per-parameter affine map (`target_shift`, `target_scale`) before the
//! head decodes them, so the losses are always evaluated in parameter units.

mod family;
mod io;
mod train;

pub use family::{DensityFamily, NormalDiagonal, NormalFull, NormalIdentity, LOG_VARIANCE_CLAMP};
pub use io::{read_trained_net, write_trained_net};
pub use train::{
    loss_c1, loss_c2, loss_gradient, mean_loss, select_hidden_nodes, train, train_with_family, HiddenNodeSelection,
    LossKind, TrainSpec, TrainedNet, TrainingMeta,
};

use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Self::Relu => x.max(T::zero()),
            Self::Sigmoid => crate::scalar::logistic(x),
        }
    }

    /// Derivative given the pre-activation `x` and activation `y`.
    #[inline]
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Self::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Self::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = NneError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Self::Relu),
            "sigmoid" => Ok(Self::Sigmoid),
            _ => Err(NneError::Config(format!("unknown activation {s:?}"))),
        }
    }
}

/// What the output layer encodes besides the point estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputHead {
    /// `p` outputs: the point estimate.
    Point,
    /// `2p` outputs: point estimate and log-variances.
    DiagVar,
    /// `p + p(p+1)/2` outputs: point estimate and a Cholesky factor of the covariance.
    FullCov,
}

impl OutputHead {
    pub fn raw_width(self, p: usize) -> usize {
        match self {
            Self::Point => p,
            Self::DiagVar => 2 * p,
            Self::FullCov => p + p * (p + 1) / 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Point => "point",
            Self::DiagVar => "diag",
            Self::FullCov => "full",
        }
    }
}

impl std::str::FromStr for OutputHead {
    type Err = NneError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Self::Point),
            "diag" | "point+diag_var" => Ok(Self::DiagVar),
            "full" | "point+full_cov" => Ok(Self::FullCov),
            _ => Err(NneError::Config(format!("unknown output head {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub activation: Activation,
    pub head: OutputHead,
    pub output_dim: usize,
}

impl NetConfig {
    pub fn new(input_dim: usize, hidden_units: usize, output_dim: usize, head: OutputHead) -> Self {
        Self {
            input_dim,
            hidden_units,
            activation: Activation::Relu,
            head,
            output_dim,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NneError::Config("input and output dimensions must be positive".into()));
        }
        if self.hidden_units == 0 {
            return Err(NneError::Config("need at least one hidden unit".into()));
        }
        Ok(())
    }

    pub fn raw_width(&self) -> usize {
        self.head.raw_width(self.output_dim)
    }

    pub fn n_params(&self) -> usize {
        let (d, h, w) = (self.input_dim, self.hidden_units, self.raw_width());
        h * d + h + w * h + w
    }
}

/// Spread of the parameter around the point estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Accuracy<T> {
    None,
    /// Variances.
    Diagonal(Vec<T>),
    /// Covariance, row-major `p x p`.
    Full(Vec<T>),
}

impl<T: Real> Accuracy<T> {
    /// Standard deviations, when available.
    pub fn std_devs(&self) -> Option<Vec<T>> {
        match self {
            Self::None => None,
            Self::Diagonal(v) => Some(v.iter().map(|x| x.sqrt()).collect()),
            Self::Full(m) => {
                let p = (m.len() as f64).sqrt() as usize;
                Some((0..p).map(|k| m[k * p + k].sqrt()).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub mu: Vec<T>,
    pub accuracy: Accuracy<T>,
}

/// Fixed affine map from raw outputs to parameter units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling<T> {
    pub shift: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> OutputScaling<T> {
    pub fn identity(p: usize) -> Self {
        Self {
            shift: vec![T::zero(); p],
            scale: vec![T::one(); p],
        }
    }
}

/// Network function: configuration, weights and the fixed input/output maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ShallowNet<T> {
    config: NetConfig,
    params: Vec<T>,
    input_mean: Vec<T>,
    input_sd: Vec<T>,
    output: OutputScaling<T>,
}

/// Per-example activations kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub(crate) struct Workspace<T> {
    pub x: Vec<T>,
    pub pre: Vec<T>,
    pub hid: Vec<T>,
    pub raw: Vec<T>,
    pub g_raw: Vec<T>,
    pub g_hid: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(config: &NetConfig) -> Self {
        Self {
            x: vec![T::zero(); config.input_dim],
            pre: vec![T::zero(); config.hidden_units],
            hid: vec![T::zero(); config.hidden_units],
            raw: vec![T::zero(); config.raw_width()],
            g_raw: vec![T::zero(); config.raw_width()],
            g_hid: vec![T::zero(); config.hidden_units],
        }
    }
}

/// Offsets of the four parameter blocks.
#[derive(Clone, Copy)]
pub(crate) struct Layout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

impl Layout {
    pub fn of(c: &NetConfig) -> Self {
        let (d, h, w) = (c.input_dim, c.hidden_units, c.raw_width());
        let b1 = h * d;
        let w2 = b1 + h;
        let b2 = w2 + w * h;
        Self { w1: 0, b1, w2, b2 }
    }
}

impl<T: Real> ShallowNet<T> {
    /// Net with all weights zero and identity input/output maps.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params: vec![T::zero(); config.n_params()],
            input_mean: vec![T::zero(); config.input_dim],
            input_sd: vec![T::one(); config.input_dim],
            output: OutputScaling::identity(config.output_dim),
            config,
        })
    }

    pub fn from_parts(
        config: NetConfig,
        params: Vec<T>,
        input_mean: Vec<T>,
        input_sd: Vec<T>,
        output: OutputScaling<T>,
    ) -> Result<Self> {
        config.validate()?;
        if params.len() != config.n_params() {
            return Err(NneError::dimension("net weights", config.n_params(), params.len()));
        }
        if input_mean.len() != config.input_dim || input_sd.len() != config.input_dim {
            return Err(NneError::dimension("input standardization", config.input_dim, input_mean.len()));
        }
        if input_sd.iter().any(|s| !(*s > T::zero())) {
            return Err(NneError::Config("input standard deviations must be positive".into()));
        }
        if output.shift.len() != config.output_dim
            || output.scale.len() != config.output_dim
            || output.scale.iter().any(|s| !(*s > T::zero()))
        {
            return Err(NneError::Config("output scaling must have p positive scales".into()));
        }
        Ok(Self {
            config,
            params,
            input_mean,
            input_sd,
            output,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Indices into [`params`](Self::params) of the weights and bias that
    /// feed raw output `o`.
    pub fn output_unit_params(&self, o: usize) -> Vec<usize> {
        let lay = Layout::of(&self.config);
        let h = self.config.hidden_units;
        let mut idx: Vec<usize> = (lay.w2 + o * h..lay.w2 + (o + 1) * h).collect();
        idx.push(lay.b2 + o);
        idx
    }

    pub fn input_mean(&self) -> &[T] {
        &self.input_mean
    }

    pub fn input_sd(&self) -> &[T] {
        &self.input_sd
    }

    pub fn output_scaling(&self) -> &OutputScaling<T> {
        &self.output
    }

    pub(crate) fn set_standardization(&mut self, mean: Vec<T>, sd: Vec<T>, output: OutputScaling<T>) {
        self.input_mean = mean;
        self.input_sd = sd;
        self.output = output;
    }

    /// Raw outputs for input `m`; fills the workspace activations.
    pub(crate) fn forward_raw(&self, m: &[T], ws: &mut Workspace<T>) {
        let c = &self.config;
        let lay = Layout::of(c);
        let d = c.input_dim;
        for k in 0..d {
            ws.x[k] = (m[k] - self.input_mean[k]) / self.input_sd[k];
        }
        let w1 = &self.params[lay.w1..lay.b1];
        let b1 = &self.params[lay.b1..lay.w2];
        for h in 0..c.hidden_units {
            let row = &w1[h * d..(h + 1) * d];
            let mut acc = b1[h];
            for (w, x) in row.iter().zip(&ws.x) {
                acc = acc + *w * *x;
            }
            ws.pre[h] = acc;
            ws.hid[h] = c.activation.apply(acc);
        }
        let hn = c.hidden_units;
        let w2 = &self.params[lay.w2..lay.b2];
        let b2 = &self.params[lay.b2..];
        for (o, r) in ws.raw.iter_mut().enumerate() {
            let row = &w2[o * hn..(o + 1) * hn];
            let mut acc = b2[o];
            for (w, h) in row.iter().zip(&ws.hid) {
                acc = acc + *w * *h;
            }
            *r = acc;
        }
    }

    /// Accumulates parameter gradients given `ws.g_raw` from the last forward pass.
    pub(crate) fn backward(&self, ws: &mut Workspace<T>, grad: &mut [T]) {
        let c = &self.config;
        let lay = Layout::of(c);
        let (d, hn) = (c.input_dim, c.hidden_units);
        for g in ws.g_hid.iter_mut() {
            *g = T::zero();
        }
        {
            let w2 = &self.params[lay.w2..lay.b2];
            let (gw2, gb2) = grad[lay.w2..].split_at_mut(lay.b2 - lay.w2);
            for (o, &go) in ws.g_raw.iter().enumerate() {
                if go == T::zero() {
                    continue;
                }
                gb2[o] = gb2[o] + go;
                let row = &w2[o * hn..(o + 1) * hn];
                let grow = &mut gw2[o * hn..(o + 1) * hn];
                for h in 0..hn {
                    grow[h] = grow[h] + go * ws.hid[h];
                    ws.g_hid[h] = ws.g_hid[h] + go * row[h];
                }
            }
        }
        let (gw1, rest) = grad[lay.w1..lay.w2].split_at_mut(lay.b1);
        for h in 0..hn {
            let gp = ws.g_hid[h] * c.activation.derivative(ws.pre[h], ws.hid[h]);
            if gp == T::zero() {
                continue;
            }
            rest[h] = rest[h] + gp;
            let grow = &mut gw1[h * d..(h + 1) * d];
            for k in 0..d {
                grow[k] = grow[k] + gp * ws.x[k];
            }
        }
    }

    /// Decoded output for one moment vector.
    pub fn forward(&self, m: &[T]) -> Result<Prediction<T>> {
        if m.len() != self.config.input_dim {
            return Err(NneError::dimension("moment vector", self.config.input_dim, m.len()));
        }
        let mut ws = Workspace::new(&self.config);
        self.forward_raw(m, &mut ws);
        Ok(self.decode(&ws.raw))
    }

    /// Convenience over `f64` moments.
    pub fn predict(&self, m: &[f64]) -> Result<Prediction<T>> {
        let mt: Vec<T> = m.iter().map(|v| T::c(*v)).collect();
        self.forward(&mt)
    }

    pub(crate) fn decode(&self, raw: &[T]) -> Prediction<T> {
        let p = self.config.output_dim;
        match self.config.head {
            OutputHead::Point => NormalIdentity.decode(raw, &self.output, p),
            OutputHead::DiagVar => NormalDiagonal.decode(raw, &self.output, p),
            OutputHead::FullCov => NormalFull.decode(raw, &self.output, p),
        }
    }
}

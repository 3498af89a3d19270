//! Mini-batch Adam training with validation-based early stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    DensityFamily, NetConfig, NormalDiagonal, NormalFull, NormalIdentity, OutputHead, OutputScaling, Prediction,
    ShallowNet, Workspace,
};
use crate::error::{NneError, Result};
use crate::params::TrainExample;
use crate::rng::RngStream;
use crate::scalar::Real;

/// Standard deviations at or below this are treated as degenerate; such
/// inputs are centred but not rescaled.
const SD_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// Mean squared error.
    C1,
    /// Gaussian negative log-likelihood, diagonal covariance.
    C2Diag,
    /// Gaussian negative log-likelihood, full covariance.
    C2Full,
}

impl LossKind {
    pub fn head(self) -> OutputHead {
        match self {
            Self::C1 => OutputHead::Point,
            Self::C2Diag => OutputHead::DiagVar,
            Self::C2Full => OutputHead::FullCov,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::C1 => "c1",
            Self::C2Diag => "c2_diag",
            Self::C2Full => "c2_full",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = NneError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c1" => Ok(Self::C1),
            "c2_diag" | "c2" => Ok(Self::C2Diag),
            "c2_full" => Ok(Self::C2Full),
            _ => Err(NneError::Config(format!("unknown loss {s:?}"))),
        }
    }
}

/// Training hyper-parameters.
///
/// Defaults: C2 with diagonal covariance, Adam with learning rate 1e-3,
/// batches of 128, at most 500 epochs, patience 25, last 10% held out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub loss: LossKind,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    /// Centre and scale each parameter by its training-set mean and SD
    /// inside the output layer. Losses are unaffected; only the
    /// parameterization the optimizer sees changes.
    pub standardize_targets: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            loss: LossKind::C2Diag,
            max_epochs: 500,
            learning_rate: 1e-3,
            batch_size: 128,
            patience: 25,
            validation_fraction: 0.10,
            standardize_targets: true,
        }
    }
}

impl TrainSpec {
    pub fn with_loss(loss: LossKind) -> Self {
        Self {
            loss,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(NneError::Config(format!(
                "validation_fraction must lie in (0,1), got {}",
                self.validation_fraction
            )));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(NneError::Config("max_epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NneError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Number of held-out examples out of `l`.
    pub fn n_validation(&self, l: usize) -> usize {
        ((l as f64 * self.validation_fraction).round() as usize).clamp(1, l.saturating_sub(1).max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub train_loss: f64,
    pub validation_loss: f64,
    /// Epochs actually run.
    pub epochs: usize,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub seed: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedNet<T> {
    pub net: ShallowNet<T>,
    pub meta: TrainingMeta,
}

impl<T: Real> TrainedNet<T> {
    pub fn config(&self) -> &NetConfig {
        self.net.config()
    }

    pub fn forward(&self, m: &[T]) -> Result<Prediction<T>> {
        self.net.forward(m)
    }

    pub fn predict(&self, m: &[f64]) -> Result<Prediction<T>> {
        self.net.predict(m)
    }
}

/// Examples flattened into contiguous arrays.
struct Data<T> {
    x: Vec<T>,
    y: Vec<T>,
    d: usize,
    p: usize,
}

impl<T: Real> Data<T> {
    fn from_examples(examples: &[TrainExample], d: usize, p: usize) -> Result<Self> {
        let mut x = Vec::with_capacity(examples.len() * d);
        let mut y = Vec::with_capacity(examples.len() * p);
        for ex in examples {
            if ex.moments.values().len() != d {
                return Err(NneError::dimension("training moments", d, ex.moments.values().len()));
            }
            if ex.theta.len() != p {
                return Err(NneError::dimension("training parameters", p, ex.theta.len()));
            }
            x.extend(ex.moments.values().iter().map(|v| T::c(*v)));
            y.extend(ex.theta.values().iter().map(|v| T::c(*v)));
        }
        Ok(Self { x, y, d, p })
    }

    fn input(&self, i: usize) -> &[T] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn target(&self, i: usize) -> &[T] {
        &self.y[i * self.p..(i + 1) * self.p]
    }
}

fn mean_sd<T: Real>(values: &[T], stride: usize, n: usize) -> (Vec<T>, Vec<T>) {
    let mut mean = vec![0.0; stride];
    for i in 0..n {
        for k in 0..stride {
            mean[k] += values[i * stride + k].as_f64();
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; stride];
    for i in 0..n {
        for k in 0..stride {
            let e = values[i * stride + k].as_f64() - mean[k];
            var[k] += e * e;
        }
    }
    let sd = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > SD_FLOOR {
                T::c(s)
            } else {
                T::one()
            }
        })
        .collect();
    (mean.into_iter().map(T::c).collect(), sd)
}

fn mean_loss_on<T: Real, F: DensityFamily<T> + ?Sized>(
    net: &ShallowNet<T>,
    family: &F,
    data: &Data<T>,
    range: std::ops::Range<usize>,
    ws: &mut Workspace<T>,
) -> f64 {
    let n = range.len();
    let mut total = 0.0;
    for i in range {
        net.forward_raw(data.input(i), ws);
        total += family.loss(&ws.raw, net.output_scaling(), data.target(i), None).as_f64();
    }
    total / n as f64
}

/// Average loss of `family` over `examples`.
pub fn mean_loss<T: Real, F: DensityFamily<T> + ?Sized>(
    net: &ShallowNet<T>,
    family: &F,
    examples: &[TrainExample],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(NneError::domain("loss over an empty example set"));
    }
    if family.head() != net.config().head {
        return Err(NneError::Config(format!(
            "family {} reads a {} head but the net has a {} head",
            family.name(),
            family.head().name(),
            net.config().head.name()
        )));
    }
    let c = net.config();
    let data = Data::from_examples(examples, c.input_dim, c.output_dim)?;
    let mut ws = Workspace::new(c);
    Ok(mean_loss_on(net, family, &data, 0..examples.len(), &mut ws))
}

/// Average loss of `family` over `examples` and its gradient with respect to
/// the flat parameter vector.
pub fn loss_gradient<T: Real, F: DensityFamily<T> + ?Sized>(
    net: &ShallowNet<T>,
    family: &F,
    examples: &[TrainExample],
) -> Result<(f64, Vec<f64>)> {
    let loss = mean_loss(net, family, examples)?;
    let c = net.config();
    let data = Data::from_examples(examples, c.input_dim, c.output_dim)?;
    let mut ws = Workspace::new(c);
    let mut g = vec![T::zero(); net.params().len()];
    for i in 0..examples.len() {
        net.forward_raw(data.input(i), &mut ws);
        family.loss(&ws.raw, net.output_scaling(), data.target(i), Some(&mut ws.g_raw));
        net.backward(&mut ws, &mut g);
    }
    let n = examples.len() as f64;
    Ok((loss, g.iter().map(|v| v.as_f64() / n).collect()))
}

/// Mean squared error of the point output, whatever the head.
pub fn loss_c1<T: Real>(net: &ShallowNet<T>, examples: &[TrainExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(NneError::domain("loss over an empty example set"));
    }
    let mut total = 0.0;
    for ex in examples {
        let pred = net.predict(ex.moments.values())?;
        if ex.theta.len() != pred.mu.len() {
            return Err(NneError::dimension("parameters", pred.mu.len(), ex.theta.len()));
        }
        total += pred
            .mu
            .iter()
            .zip(ex.theta.values())
            .map(|(m, t)| (m.as_f64() - t).powi(2))
            .sum::<f64>();
    }
    Ok(total / examples.len() as f64)
}

/// Gaussian negative log-likelihood (times two, without constants) using the
/// net's covariance output.
pub fn loss_c2<T: Real>(net: &ShallowNet<T>, examples: &[TrainExample]) -> Result<f64> {
    match net.config().head {
        OutputHead::DiagVar => mean_loss(net, &NormalDiagonal, examples),
        OutputHead::FullCov => mean_loss(net, &NormalFull, examples),
        OutputHead::Point => Err(NneError::Config("C2 needs a variance head".into())),
    }
}

fn init_params<T: Real, R: Rng>(net: &mut ShallowNet<T>, rng: &mut R) {
    let c = *net.config();
    let lay = super::Layout::of(&c);
    // The output layer starts at zero, so the first prediction is the
    // training-set mean of theta with its marginal variance.
    let a1 = (3.0 / c.input_dim as f64).sqrt();
    for w in &mut net.params_mut()[lay.w1..lay.b1] {
        *w = T::c(rng.random_range(-a1..a1));
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
}

impl<T: Real> Adam<T> {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            lr: T::c(lr),
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T]) {
        let (b1, b2, eps) = (T::c(0.9), T::c(0.999), T::c(1e-8));
        self.t += 1;
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] = params[i] - self.lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Trains a net whose head matches `spec.loss`.
pub fn train<T: Real>(
    examples: &[TrainExample],
    config: NetConfig,
    spec: &TrainSpec,
    stream: &RngStream,
) -> Result<TrainedNet<T>> {
    if config.head != spec.loss.head() {
        return Err(NneError::Config(format!(
            "loss {} needs a {} head, config has {}",
            spec.loss.name(),
            spec.loss.head().name(),
            config.head.name()
        )));
    }
    match spec.loss {
        LossKind::C1 => train_with_family(examples, config, spec, &NormalIdentity, stream),
        LossKind::C2Diag => train_with_family(examples, config, spec, &NormalDiagonal, stream),
        LossKind::C2Full => train_with_family(examples, config, spec, &NormalFull, stream),
    }
}

/// Trains against an arbitrary density family; `spec.loss` is ignored.
pub fn train_with_family<T: Real, F: DensityFamily<T> + ?Sized>(
    examples: &[TrainExample],
    config: NetConfig,
    spec: &TrainSpec,
    family: &F,
    stream: &RngStream,
) -> Result<TrainedNet<T>> {
    spec.validate()?;
    config.validate()?;
    if config.head != family.head() {
        return Err(NneError::Config(format!(
            "family {} reads a {} head, config has {}",
            family.name(),
            family.head().name(),
            config.head.name()
        )));
    }
    if examples.len() < 2 {
        return Err(NneError::domain("training needs at least two examples"));
    }
    let data = Data::<T>::from_examples(examples, config.input_dim, config.output_dim)?;
    let l = examples.len();
    let n_val = spec.n_validation(l);
    let n_train = l - n_val;

    let mut net = ShallowNet::<T>::zeros(config)?;
    let (in_mean, in_sd) = mean_sd(&data.x, data.d, n_train);
    let output = if spec.standardize_targets {
        let (shift, scale) = mean_sd(&data.y, data.p, n_train);
        OutputScaling { shift, scale }
    } else {
        OutputScaling::identity(data.p)
    };
    net.set_standardization(in_mean, in_sd, output);

    let mut rng = stream.rng();
    init_params(&mut net, &mut rng);

    let n_params = config.n_params();
    let mut adam = Adam::new(n_params, spec.learning_rate);
    let mut grad = vec![T::zero(); n_params];
    let mut ws = Workspace::new(&config);
    let mut order: Vec<usize> = (0..n_train).collect();

    let mut best = net.params().to_vec();
    let mut best_val = mean_loss_on(&net, family, &data, n_train..l, &mut ws);
    let mut best_epoch = 0;
    let mut last_train = f64::NAN;
    let mut epochs = 0;
    let mut stale = 0;
    if !best_val.is_finite() {
        return Err(NneError::Training {
            epoch: 0,
            reason: "initial validation loss is not finite".into(),
            last_loss: f64::NAN,
        });
    }

    for epoch in 1..=spec.max_epochs {
        epochs = epoch;
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(spec.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let mut batch_total = T::zero();
            for &i in batch {
                net.forward_raw(data.input(i), &mut ws);
                let loss = family.loss(&ws.raw, net.output_scaling(), data.target(i), Some(&mut ws.g_raw));
                batch_total = batch_total + loss;
                net.backward(&mut ws, &mut grad);
            }
            let bt = batch_total.as_f64();
            if !bt.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NneError::Training {
                    epoch,
                    reason: format!("non-finite {} loss or gradient", family.name()),
                    last_loss: last_train,
                });
            }
            epoch_total += bt;
            let inv = T::one() / T::c(batch.len() as f64);
            grad.iter_mut().for_each(|g| *g = *g * inv);
            adam.step(net.params_mut(), &grad);
        }
        last_train = epoch_total / n_train as f64;

        let val = mean_loss_on(&net, family, &data, n_train..l, &mut ws);
        if !val.is_finite() {
            return Err(NneError::Training {
                epoch,
                reason: format!("non-finite {} validation loss", family.name()),
                last_loss: last_train,
            });
        }
        if val < best_val {
            best_val = val;
            best_epoch = epoch;
            best.copy_from_slice(net.params());
            stale = 0;
        } else {
            stale += 1;
            if stale >= spec.patience {
                break;
            }
        }
    }

    net.params_mut().copy_from_slice(&best);
    let train_loss = mean_loss_on(&net, family, &data, 0..n_train, &mut ws);
    Ok(TrainedNet {
        net,
        meta: TrainingMeta {
            train_loss,
            validation_loss: best_val,
            epochs,
            best_epoch,
            n_train,
            n_validation: n_val,
            seed: stream.to_string(),
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenNodeSelection {
    pub chosen: usize,
    /// `(hidden units, validation loss)` per candidate, in candidate order.
    pub validation_losses: Vec<(usize, f64)>,
}

/// Trains one net per candidate width on the same split and seed and keeps
/// the width with the smallest validation loss; ties go to the earlier candidate.
pub fn select_hidden_nodes<T: Real>(
    examples: &[TrainExample],
    candidates: &[usize],
    template: NetConfig,
    spec: &TrainSpec,
    stream: &RngStream,
) -> Result<HiddenNodeSelection> {
    if candidates.is_empty() {
        return Err(NneError::Config("no hidden-node candidates".into()));
    }
    if candidates.len() == 1 {
        return Ok(HiddenNodeSelection {
            chosen: candidates[0],
            validation_losses: vec![(candidates[0], f64::NAN)],
        });
    }
    let losses: Vec<(usize, f64)> = candidates
        .par_iter()
        .map(|&h| {
            let cfg = NetConfig {
                hidden_units: h,
                ..template
            };
            train::<T>(examples, cfg, spec, stream).map(|t| (h, t.meta.validation_loss))
        })
        .collect::<Result<_>>()?;
    let mut chosen = 0;
    for (i, (_, v)) in losses.iter().enumerate() {
        if *v < losses[chosen].1 {
            chosen = i;
        }
    }
    Ok(HiddenNodeSelection {
        chosen: losses[chosen].0,
        validation_losses: losses,
    })
}

//! Training-set generation and estimation for any simulable model.
//!
//! A [`StructuralModel`] knows its parameter box and how to turn a parameter
//! draw into the moments of one simulated dataset. [`generate_training_set`]
//! draws `theta` uniformly from the box, simulates, discards trimmed datasets
//! and redraws until `L*` examples are collected. [`fit_nne`] trains the net;
//! [`FittedNne::estimate`] applies it to observed moments.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ar1::{ar1_moments, simulate_ar1, Ar1MomentSpec, DEFAULT_SAMPLE_SIZE};
use crate::error::{NneError, Result};
use crate::net::{self, Accuracy, Activation, NetConfig, TrainSpec, TrainedNet};
use crate::params::{sample_theta, MomentVector, ParamSpace, ParamVector, TrainExample};
use crate::rng::RngStream;
use crate::search::{
    default_param_space, simulate_search, ConsumerGrid, MomentContext, SearchMomentSpec, SearchOutcome,
    SearchParams,
};

/// Result of simulating one dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum Simulated {
    Kept(MomentVector),
    /// Dataset rejected by the model's trimming filter, with the filter's name.
    Trimmed(&'static str),
}

/// A model that can be simulated at any parameter in its box.
pub trait StructuralModel: Send + Sync {
    fn model_id(&self) -> &'static str;
    fn spec_id(&self) -> String;
    fn param_space(&self) -> &ParamSpace;
    fn n_moments(&self) -> usize;
    /// Simulates one dataset at `theta` with randomness from `stream`.
    fn simulate(&self, theta: &ParamVector, stream: &RngStream) -> Result<Simulated>;
}

/// AR(1) with `beta` in a sub-interval of `[0, 1)`.
#[derive(Clone, Debug)]
pub struct Ar1Model {
    space: ParamSpace,
    spec: Ar1MomentSpec,
    n: usize,
}

impl Ar1Model {
    /// `beta in [0, 0.9]` with `n = 100`.
    pub fn new(spec: Ar1MomentSpec) -> Self {
        Self {
            space: ParamSpace::from_bounds([("beta", 0.0, 0.9)]).expect("static box"),
            spec,
            n: DEFAULT_SAMPLE_SIZE,
        }
    }

    pub fn with_sample_size(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_space(mut self, lower: f64, upper: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lower) || !(0.0..1.0).contains(&upper) {
            return Err(NneError::domain("AR(1) coefficient box must lie in [0, 1)"));
        }
        self.space = ParamSpace::from_bounds([("beta", lower, upper)])?;
        Ok(self)
    }

    pub fn spec(&self) -> Ar1MomentSpec {
        self.spec
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }
}

impl StructuralModel for Ar1Model {
    fn model_id(&self) -> &'static str {
        "ar1"
    }

    fn spec_id(&self) -> String {
        self.spec.id()
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn n_moments(&self) -> usize {
        self.spec.len()
    }

    fn simulate(&self, theta: &ParamVector, stream: &RngStream) -> Result<Simulated> {
        let series = simulate_ar1(theta[0], self.n, stream)?;
        Ok(Simulated::Kept(ar1_moments(&series, self.spec)?))
    }
}

/// Weitzman search model on fixed covariates. Every simulated dataset shares
/// the same grid.
#[derive(Clone, Debug)]
pub struct SearchModel {
    space: ParamSpace,
    grid: Arc<ConsumerGrid>,
    context: Arc<MomentContext>,
    spec: SearchMomentSpec,
    trim: bool,
}

/// Which trimming filter, if any, rejects a dataset.
pub fn search_trim_reason(grid: &ConsumerGrid, outcomes: &[SearchOutcome]) -> Option<&'static str> {
    let n = outcomes.len();
    let buys = outcomes.iter().filter(|o| o.bought.is_some()).count();
    if buys == 0 {
        return Some("nobody buys");
    }
    if buys == n {
        return Some("everyone buys");
    }
    if outcomes.iter().all(|o| o.n_searched() <= 1) {
        return Some("nobody makes a paid search");
    }
    if outcomes
        .iter()
        .enumerate()
        .all(|(i, o)| o.n_searched() == grid.n_options(i))
    {
        return Some("everyone searches every option");
    }
    None
}

impl SearchModel {
    pub fn new(grid: Arc<ConsumerGrid>, spec: SearchMomentSpec) -> Self {
        let context = Arc::new(MomentContext::new(&grid));
        Self {
            space: default_param_space(),
            grid,
            context,
            spec,
            trim: true,
        }
    }

    pub fn with_space(mut self, space: ParamSpace) -> Result<Self> {
        if space.dim() != 9 {
            return Err(NneError::dimension("search parameter space", 9, space.dim()));
        }
        self.space = space;
        Ok(self)
    }

    pub fn with_trimming(mut self, trim: bool) -> Self {
        self.trim = trim;
        self
    }

    /// Same grid and box, different moment specification.
    pub fn with_spec(&self, spec: SearchMomentSpec) -> Self {
        Self { spec, ..self.clone() }
    }

    pub fn grid(&self) -> &Arc<ConsumerGrid> {
        &self.grid
    }

    pub fn context(&self) -> &MomentContext {
        &self.context
    }

    pub fn spec(&self) -> SearchMomentSpec {
        self.spec
    }

    /// Simulated outcomes at `theta`.
    pub fn outcomes(&self, theta: &ParamVector, stream: &RngStream) -> Result<Vec<SearchOutcome>> {
        simulate_search(&SearchParams::from_vector(theta)?, &self.grid, stream)
    }

    /// Observed moments of outcomes on this model's grid.
    pub fn moments_of(&self, outcomes: &[SearchOutcome]) -> Result<MomentVector> {
        self.context.moments(outcomes, self.spec)
    }
}

impl StructuralModel for SearchModel {
    fn model_id(&self) -> &'static str {
        "search"
    }

    fn spec_id(&self) -> String {
        self.spec.id().to_string()
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn n_moments(&self) -> usize {
        self.spec.len()
    }

    fn simulate(&self, theta: &ParamVector, stream: &RngStream) -> Result<Simulated> {
        let outcomes = self.outcomes(theta, stream)?;
        if self.trim {
            if let Some(reason) = search_trim_reason(&self.grid, &outcomes) {
                return Ok(Simulated::Trimmed(reason));
            }
        }
        Ok(Simulated::Kept(self.moments_of(&outcomes)?))
    }
}

/// Normal mean with known unit variance; the moment is the sample mean.
#[derive(Clone, Debug)]
pub struct ConjugateToy {
    space: ParamSpace,
    n: usize,
}

impl ConjugateToy {
    /// `theta in [-5, 5]`, `n = 100`.
    pub fn new() -> Self {
        Self {
            space: ParamSpace::from_bounds([("theta", -5.0, 5.0)]).expect("static box"),
            n: 100,
        }
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }
}

impl Default for ConjugateToy {
    fn default() -> Self {
        Self::new()
    }
}

impl StructuralModel for ConjugateToy {
    fn model_id(&self) -> &'static str {
        "conjugate_toy"
    }

    fn spec_id(&self) -> String {
        "ybar".into()
    }

    fn param_space(&self) -> &ParamSpace {
        &self.space
    }

    fn n_moments(&self) -> usize {
        1
    }

    fn simulate(&self, theta: &ParamVector, stream: &RngStream) -> Result<Simulated> {
        let mut rng = stream.rng();
        let sum: f64 = (0..self.n)
            .map(|_| theta[0] + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .sum();
        Ok(Simulated::Kept(MomentVector::new("ybar", vec![sum / self.n as f64])))
    }
}

/// Rejection budget: at most this many simulations per requested example.
pub const REDRAW_FACTOR: usize = 10;

/// `L*` training examples. Example `l`'s `k`-th attempt uses
/// `stream.descend([l, k])`: child 0 draws `theta`, child 1 the data. Trimmed
/// datasets are redrawn in rounds so the result does not depend on the
/// thread schedule.
pub fn generate_training_set(
    model: &dyn StructuralModel,
    l_star: usize,
    stream: &RngStream,
) -> Result<Vec<TrainExample>> {
    if l_star < 10 {
        return Err(NneError::Config(format!("L* must be at least 10, got {l_star}")));
    }
    let budget = REDRAW_FACTOR * l_star;
    let mut slots: Vec<Option<TrainExample>> = vec![None; l_star];
    let mut pending: Vec<usize> = (0..l_star).collect();
    let mut attempt = 0u64;
    let mut used = 0usize;
    let mut rejected: BTreeMap<&'static str, usize> = BTreeMap::new();
    while !pending.is_empty() {
        used += pending.len();
        if used > budget {
            let (filter, count) = rejected
                .iter()
                .max_by_key(|(_, c)| **c)
                .map(|(f, c)| (*f, *c))
                .unwrap_or(("none", 0));
            return Err(NneError::Config(format!(
                "training-set redraw budget of {budget} simulations exhausted with {} of {l_star} examples missing; \
                 filter {filter:?} rejected {count} datasets",
                pending.len()
            )));
        }
        let results: Vec<(usize, Result<(ParamVector, Simulated)>)> = pending
            .par_iter()
            .map(|&l| {
                let s = stream.descend(&[l as u64, attempt]);
                let theta = sample_theta(model.param_space(), &s.substream(0));
                (l, model.simulate(&theta, &s.substream(1)).map(|sim| (theta, sim)))
            })
            .collect();
        let mut next = Vec::new();
        for (l, r) in results {
            match r? {
                (theta, Simulated::Kept(moments)) => {
                    if moments.len() != model.n_moments() {
                        return Err(NneError::dimension("simulated moments", model.n_moments(), moments.len()));
                    }
                    slots[l] = Some(TrainExample { theta, moments });
                }
                (_, Simulated::Trimmed(reason)) => {
                    *rejected.entry(reason).or_default() += 1;
                    next.push(l);
                }
            }
        }
        pending = next;
        attempt += 1;
    }
    Ok(slots.into_iter().map(|s| s.expect("every slot filled")).collect())
}

/// How to build and train the net.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NneOptions {
    pub l_star: usize,
    pub hidden_units: usize,
    pub activation: Activation,
    pub train: TrainSpec,
}

impl Default for NneOptions {
    /// `L* = 10_000`, 64 ReLU units, diagonal-covariance C2.
    fn default() -> Self {
        Self {
            l_star: 10_000,
            hidden_units: 64,
            activation: Activation::Relu,
            train: TrainSpec::default(),
        }
    }
}

impl NneOptions {
    pub fn net_config(&self, input_dim: usize, output_dim: usize) -> NetConfig {
        NetConfig::new(input_dim, self.hidden_units, output_dim, self.train.loss.head())
            .with_activation(self.activation)
    }
}

/// A net trained for one model and moment specification.
#[derive(Clone, Debug)]
pub struct FittedNne {
    pub net: TrainedNet<f64>,
    pub space: ParamSpace,
    pub spec_id: String,
    pub l_star: usize,
}

/// Trains on an existing training set.
pub fn fit_nne_on(
    examples: &[TrainExample],
    space: &ParamSpace,
    spec_id: &str,
    opts: &NneOptions,
    stream: &RngStream,
) -> Result<FittedNne> {
    let first = examples
        .first()
        .ok_or_else(|| NneError::domain("empty training set"))?;
    let cfg = opts.net_config(first.moments.len(), space.dim());
    let net = net::train(examples, cfg, &opts.train, stream)?;
    Ok(FittedNne {
        net,
        space: space.clone(),
        spec_id: spec_id.to_string(),
        l_star: examples.len(),
    })
}

/// Generates a training set (substream 0) and trains a net (substream 1).
pub fn fit_nne(model: &dyn StructuralModel, opts: &NneOptions, stream: &RngStream) -> Result<FittedNne> {
    let examples = generate_training_set(model, opts.l_star, &stream.substream(0))?;
    fit_nne_on(
        &examples,
        model.param_space(),
        &model.spec_id(),
        opts,
        &stream.substream(1),
    )
}

/// Point estimate and accuracy for one observed moment vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub param_names: Vec<String>,
    pub theta_hat: ParamVector,
    pub accuracy: Accuracy<f64>,
    /// Strictly inside the box, per parameter.
    pub inside_theta: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub validation_loss: f64,
    pub l_star: usize,
    pub seed: String,
}

impl EstimateReport {
    /// Per-parameter standard deviations, when the head reports them.
    pub fn std_devs(&self) -> Option<Vec<f64>> {
        self.accuracy.std_devs()
    }
}

impl FittedNne {
    pub fn estimate(&self, observed: &MomentVector) -> Result<EstimateReport> {
        if observed.spec_id() != self.spec_id {
            return Err(NneError::Config(format!(
                "net was trained on {:?} moments, observed moments are {:?}",
                self.spec_id,
                observed.spec_id()
            )));
        }
        let pred = self.net.predict(observed.values())?;
        let inside = pred
            .mu
            .iter()
            .zip(self.space.lower().iter().zip(self.space.upper()))
            .map(|(v, (lo, hi))| lo < v && v < hi)
            .collect();
        Ok(EstimateReport {
            param_names: self.space.names().to_vec(),
            theta_hat: ParamVector::new(pred.mu),
            accuracy: pred.accuracy,
            inside_theta: inside,
            lower: self.space.lower().to_vec(),
            upper: self.space.upper().to_vec(),
            validation_loss: self.net.meta.validation_loss,
            l_star: self.l_star,
            seed: self.net.meta.seed.clone(),
        })
    }
}

/// Trains a net for `model` and applies it to `observed`.
pub fn nne_estimate(
    model: &dyn StructuralModel,
    observed: &MomentVector,
    opts: &NneOptions,
    stream: &RngStream,
) -> Result<EstimateReport> {
    if observed.len() != model.n_moments() {
        return Err(NneError::dimension("observed moments", model.n_moments(), observed.len()));
    }
    fit_nne(model, opts, stream)?.estimate(observed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RangePosition {
    Below,
    Above,
    /// Exactly on a bound.
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeFlag {
    pub parameter: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub position: RangePosition,
}

/// Parameters whose estimate is not strictly inside the training box.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeAdvisory {
    pub flags: Vec<RangeFlag>,
}

impl RangeAdvisory {
    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn message(&self) -> Option<String> {
        if self.flags.is_empty() {
            return None;
        }
        let names: Vec<&str> = self.flags.iter().map(|f| f.parameter.as_str()).collect();
        Some(format!(
            "estimates of {} are not inside the parameter box; the box likely does not contain the truth \
             and needs to be adjusted",
            names.join(", ")
        ))
    }
}

pub fn check_theta_range(report: &EstimateReport) -> RangeAdvisory {
    let flags = report
        .theta_hat
        .values()
        .iter()
        .enumerate()
        .filter_map(|(k, &v)| {
            let (lo, hi) = (report.lower[k], report.upper[k]);
            let position = if v < lo {
                RangePosition::Below
            } else if v > hi {
                RangePosition::Above
            } else if v == lo || v == hi {
                RangePosition::Boundary
            } else {
                return None;
            };
            Some(RangeFlag {
                parameter: report.param_names[k].clone(),
                estimate: v,
                lower: lo,
                upper: hi,
                position,
            })
        })
        .collect();
    RangeAdvisory { flags }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::generate_covariates;

    #[test]
    fn ar1_training_set_counts_and_determinism() {
        let model = Ar1Model::new(Ar1MomentSpec::Row1);
        let a = generate_training_set(&model, 1000, &RngStream::new(5)).unwrap();
        assert_eq!(a.len(), 1000);
        assert!(a.iter().all(|e| e.moments.len() == 1 && (0.0..=0.9).contains(&e.theta[0])));
        let b = generate_training_set(&model, 1000, &RngStream::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(generate_training_set(&model, 9, &RngStream::new(5)).is_err());
    }

    #[test]
    fn search_training_set_is_trimmed() {
        let grid = generate_covariates(200, 10, &RngStream::new(1)).unwrap().into_shared();
        let model = SearchModel::new(grid.clone(), SearchMomentSpec::M46);
        let ex = generate_training_set(&model, 60, &RngStream::new(2)).unwrap();
        assert_eq!(ex.len(), 60);
        assert!(Arc::ptr_eq(model.grid(), &grid));
        for e in &ex {
            // buy-rate moment is mean of purchase dummy among consumer outcomes
            let buy_rate = e.moments.values()[18];
            assert!(buy_rate > 0.0 && buy_rate < 1.0);
            assert_eq!(e.moments.len(), 46);
        }
    }

    struct AlwaysTrimmed(ParamSpace);

    impl StructuralModel for AlwaysTrimmed {
        fn model_id(&self) -> &'static str {
            "never"
        }
        fn spec_id(&self) -> String {
            "none".into()
        }
        fn param_space(&self) -> &ParamSpace {
            &self.0
        }
        fn n_moments(&self) -> usize {
            1
        }
        fn simulate(&self, _: &ParamVector, _: &RngStream) -> Result<Simulated> {
            Ok(Simulated::Trimmed("nobody buys"))
        }
    }

    #[test]
    fn exhausted_budget_names_the_filter() {
        let m = AlwaysTrimmed(ParamSpace::from_bounds([("a", 0.0, 1.0)]).unwrap());
        let err = generate_training_set(&m, 10, &RngStream::new(1)).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, NneError::Config(_)));
        assert!(msg.contains("nobody buys"), "{msg}");
    }

    #[test]
    fn range_advisory_flags_outside_and_boundary() {
        let report = |v: Vec<f64>| EstimateReport {
            param_names: vec!["a".into(), "b".into()],
            inside_theta: vec![],
            theta_hat: ParamVector::new(v),
            accuracy: Accuracy::None,
            lower: vec![0.0, -3.0],
            upper: vec![1.0, -2.0],
            validation_loss: 0.0,
            l_star: 10,
            seed: String::new(),
        };
        assert!(check_theta_range(&report(vec![0.5, -2.5])).is_empty());
        let adv = check_theta_range(&report(vec![1.0, -3.4]));
        assert_eq!(adv.flags.len(), 2);
        assert_eq!(adv.flags[0].position, RangePosition::Boundary);
        assert_eq!(adv.flags[1].position, RangePosition::Below);
        assert!(adv.message().unwrap().contains("a, b"));
    }

    #[test]
    fn estimate_checks_spec() {
        let model = ConjugateToy::new();
        let opts = NneOptions {
            l_star: 200,
            hidden_units: 4,
            train: TrainSpec {
                max_epochs: 3,
                ..TrainSpec::default()
            },
            ..NneOptions::default()
        };
        let fitted = fit_nne(&model, &opts, &RngStream::new(1)).unwrap();
        assert!(fitted.estimate(&MomentVector::new("m46", vec![0.0])).is_err());
        let r = fitted.estimate(&MomentVector::new("ybar", vec![0.0])).unwrap();
        assert_eq!(r.theta_hat.len(), 1);
        assert!(r.std_devs().unwrap()[0] > 0.0);
        let again = fit_nne(&model, &opts, &RngStream::new(1)).unwrap();
        assert_eq!(again.estimate(&MomentVector::new("ybar", vec![0.0])).unwrap(), r);
    }
}

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::rng::RngStream;

pub const ATTRIBUTE_NAMES: [&str; 6] = ["stars", "review", "location", "chain", "promotion", "log_price"];

/// Attributes plus log rank: the per-option covariates `x_ij`.
pub const COVARIATE_NAMES: [&str; 7] = [
    "stars",
    "review",
    "location",
    "chain",
    "promotion",
    "log_price",
    "log_rank",
];

/// Hotel attributes entering utility, in [`ATTRIBUTE_NAMES`] order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionAttributes(pub [f64; 6]);

impl OptionAttributes {
    #[inline]
    pub fn values(&self) -> &[f64; 6] {
        &self.0
    }
}

/// Observed covariates for `n` consumers; consumer `i` owns options
/// `offsets[i]..offsets[i + 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsumerGrid {
    offsets: Vec<usize>,
    attrs: Vec<OptionAttributes>,
    ranks: Vec<u32>,
}

impl ConsumerGrid {
    /// Builds a grid from per-consumer option lists, checking that each
    /// consumer's ranks are a permutation of `1..=J_i`.
    pub fn from_consumers(consumers: Vec<Vec<(OptionAttributes, u32)>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(consumers.len() + 1);
        offsets.push(0);
        let mut attrs = Vec::new();
        let mut ranks = Vec::new();
        for (i, opts) in consumers.into_iter().enumerate() {
            if opts.is_empty() {
                return Err(NneError::domain(format!("consumer {i} has no options")));
            }
            let j = opts.len();
            let mut seen = vec![false; j];
            for (a, r) in opts {
                let r_idx = (r as usize).wrapping_sub(1);
                if r_idx >= j || seen[r_idx] {
                    return Err(NneError::domain(format!(
                        "consumer {i}: ranks are not a permutation of 1..={j}"
                    )));
                }
                if a.0.iter().any(|x| !x.is_finite()) {
                    return Err(NneError::domain(format!("consumer {i}: non-finite attribute")));
                }
                seen[r_idx] = true;
                attrs.push(a);
                ranks.push(r);
            }
            offsets.push(attrs.len());
        }
        if offsets.len() < 2 {
            return Err(NneError::domain("grid needs at least one consumer"));
        }
        Ok(Self {
            offsets,
            attrs,
            ranks,
        })
    }

    pub fn n_consumers(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_options_total(&self) -> usize {
        self.attrs.len()
    }

    #[inline]
    pub fn n_options(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    #[inline]
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn max_options(&self) -> usize {
        (0..self.n_consumers()).map(|i| self.n_options(i)).max().unwrap_or(0)
    }

    #[inline]
    pub fn attributes(&self, i: usize) -> &[OptionAttributes] {
        &self.attrs[self.range(i)]
    }

    #[inline]
    pub fn ranks(&self, i: usize) -> &[u32] {
        &self.ranks[self.range(i)]
    }

    pub fn all_attributes(&self) -> &[OptionAttributes] {
        &self.attrs
    }

    pub fn all_ranks(&self) -> &[u32] {
        &self.ranks
    }

    /// Covariates `x_ij` of option `j` (global index): attributes then log rank.
    #[inline]
    pub fn covariates(&self, global: usize) -> [f64; 7] {
        let a = &self.attrs[global].0;
        [a[0], a[1], a[2], a[3], a[4], a[5], (self.ranks[global] as f64).ln()]
    }

    /// New grid holding consumers `idx` in the given order (duplicates allowed).
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(idx.len() + 1);
        offsets.push(0);
        let mut attrs = Vec::new();
        let mut ranks = Vec::new();
        for &i in idx {
            attrs.extend_from_slice(self.attributes(i));
            ranks.extend_from_slice(self.ranks(i));
            offsets.push(attrs.len());
        }
        Self {
            offsets,
            attrs,
            ranks,
        }
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

fn categorical<R: Rng + ?Sized>(rng: &mut R, values: &[f64], probs: &[f64]) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, p) in values.iter().zip(probs) {
        acc += p;
        if u < acc {
            return *v;
        }
    }
    *values.last().unwrap()
}

/// Synthetic hotel lists resembling the real search data: option `j` of
/// every consumer sits at rank `j + 1`.
pub fn generate_covariates(n: usize, j: usize, stream: &RngStream) -> Result<ConsumerGrid> {
    if n == 0 || j < 2 {
        return Err(NneError::domain(format!("need n >= 1 and J >= 2, got n={n}, J={j}")));
    }
    let mut rng = stream.rng();
    let location = Normal::new(4.0, 0.3).expect("valid normal");
    let chain = Bernoulli::new(0.8).expect("valid p");
    let promo = Bernoulli::new(0.6).expect("valid p");
    let mut attrs = Vec::with_capacity(n * j);
    let mut ranks = Vec::with_capacity(n * j);
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for _ in 0..n {
        for r in 0..j {
            let stars = categorical(&mut rng, &[2.0, 3.0, 4.0, 5.0], &[0.05, 0.25, 0.4, 0.3]);
            let review = categorical(
                &mut rng,
                &[3.0, 3.5, 4.0, 4.5, 5.0],
                &[0.08, 0.17, 0.4, 0.3, 0.05],
            );
            let loc = location.sample(&mut rng);
            let ch = if chain.sample(&mut rng) { 1.0 } else { 0.0 };
            let pr = if promo.sample(&mut rng) { 1.0 } else { 0.0 };
            let z: f64 = rng.sample(StandardNormal);
            let log_price = 0.15 + 0.6 * z;
            attrs.push(OptionAttributes([stars, review, loc, ch, pr, log_price]));
            ranks.push(r as u32 + 1);
        }
        offsets.push(attrs.len());
    }
    Ok(ConsumerGrid {
        offsets,
        attrs,
        ranks,
    })
}

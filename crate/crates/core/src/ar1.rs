//! AR(1) data-generating process and its moment specifications.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::params::MomentVector;
use crate::rng::RngStream;
use crate::scalar::Real;

pub const DEFAULT_SAMPLE_SIZE: usize = 100;

/// Observed or simulated AR(1) series `y_1..y_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ar1Series(Vec<f64>);

impl Ar1Series {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NneError::domain("AR(1) series has non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(NneError::domain(format!("AR(1) coefficient {beta} outside [0, 1)")));
    }
    Ok(())
}

/// Standard-normal shocks driving one series: `shocks[0]` scales the
/// stationary initial draw, `shocks[1..]` are the innovations.
pub fn draw_shocks<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Deterministic map from shocks to a series. Used directly for common random numbers.
pub fn series_from_shocks(beta: f64, shocks: &[f64]) -> Result<Ar1Series> {
    check_beta(beta)?;
    let mut y = Vec::with_capacity(shocks.len());
    if let Some(&z0) = shocks.first() {
        y.push(z0 / (1.0 - beta * beta).sqrt());
        for &e in &shocks[1..] {
            let prev = *y.last().unwrap();
            y.push(beta * prev + e);
        }
    }
    Ok(Ar1Series(y))
}

/// Simulates `n` observations with `y_1` from the stationary distribution.
pub fn simulate_ar1(beta: f64, n: usize, stream: &RngStream) -> Result<Ar1Series> {
    check_beta(beta)?;
    if n < 2 {
        return Err(NneError::domain("AR(1) series needs n >= 2"));
    }
    let shocks = draw_shocks(n, &mut stream.rng());
    series_from_shocks(beta, &shocks)
}

/// `E(y_i y_{i-lag}) = beta^lag / (1 - beta^2)`.
pub fn ar1_population_moment<T: Real>(beta: T, lag: u32) -> T {
    beta.powi(lag as i32) / (T::one() - beta * beta)
}

/// One product averaged by a moment specification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentTerm {
    /// `y_i y_{i-k}`; lag 0 is `y_i^2`.
    Cross(usize),
    /// `y_i^2 y_{i-k}`.
    SquareLead(usize),
    /// `y_i y_{i-k}^2`.
    SquareLag(usize),
}

impl MomentTerm {
    pub fn lag(self) -> usize {
        match self {
            Self::Cross(k) | Self::SquareLead(k) | Self::SquareLag(k) => k,
        }
    }

    /// Summand at 0-based index `i` (requires `i >= lag`).
    #[inline]
    pub fn product(self, y: &[f64], i: usize) -> f64 {
        match self {
            Self::Cross(k) => y[i] * y[i - k],
            Self::SquareLead(k) => y[i] * y[i] * y[i - k],
            Self::SquareLag(k) => y[i] * y[i - k] * y[i - k],
        }
    }

    /// Average over the `n - k` valid indices.
    pub fn sample_mean(self, y: &[f64]) -> f64 {
        let k = self.lag();
        let s: f64 = (k..y.len()).map(|i| self.product(y, i)).sum();
        s / (y.len() - k) as f64
    }

    /// Expectation under the stationary AR(1) with coefficient `beta`.
    /// Odd-order Gaussian products vanish for every `beta`.
    pub fn population<T: Real>(self, beta: T) -> T {
        match self {
            Self::Cross(k) => ar1_population_moment(beta, k as u32),
            Self::SquareLead(_) | Self::SquareLag(_) => T::zero(),
        }
    }
}

/// The six moment specifications compared for redundancy robustness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ar1MomentSpec {
    Row1,
    Row2,
    Row3,
    Row4,
    Row5,
    Row6,
}

impl Ar1MomentSpec {
    pub const ALL: [Self; 6] = [
        Self::Row1,
        Self::Row2,
        Self::Row3,
        Self::Row4,
        Self::Row5,
        Self::Row6,
    ];

    pub fn from_row(row: usize) -> Result<Self> {
        Self::ALL
            .get(row.wrapping_sub(1))
            .copied()
            .ok_or_else(|| NneError::Config(format!("AR(1) moment row {row} not in 1..=6")))
    }

    pub fn row(self) -> usize {
        self as usize + 1
    }

    pub fn id(self) -> String {
        format!("ar1_row{}", self.row())
    }

    pub fn terms(self) -> Vec<MomentTerm> {
        use MomentTerm::*;
        match self {
            Self::Row1 => vec![Cross(1)],
            Self::Row2 => vec![Cross(1), Cross(0)],
            Self::Row3 => (1..=3).map(Cross).collect(),
            Self::Row4 => (1..=10).map(Cross).collect(),
            Self::Row5 => vec![Cross(1), SquareLead(1), SquareLag(1)],
            Self::Row6 => (1..=3)
                .map(Cross)
                .chain((1..=3).map(SquareLead))
                .chain((1..=3).map(SquareLag))
                .collect(),
        }
    }

    pub fn len(self) -> usize {
        match self {
            Self::Row1 => 1,
            Self::Row2 => 2,
            Self::Row3 => 3,
            Self::Row4 => 10,
            Self::Row5 => 3,
            Self::Row6 => 9,
        }
    }

    pub fn max_lag(self) -> usize {
        self.terms().iter().map(|t| t.lag()).max().unwrap_or(0)
    }

    /// Population moment vector at `beta`.
    pub fn population(self, beta: f64) -> Vec<f64> {
        self.terms().iter().map(|t| t.population(beta)).collect()
    }
}

impl std::str::FromStr for Ar1MomentSpec {
    type Err = NneError;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim_start_matches("ar1_").trim_start_matches("row");
        let row: usize = digits
            .parse()
            .map_err(|_| NneError::Config(format!("unknown AR(1) moment spec {s:?}")))?;
        Self::from_row(row)
    }
}

/// Sample moments of `series` under `spec`; lag-k products are averaged over n-k terms.
pub fn ar1_moments(series: &Ar1Series, spec: Ar1MomentSpec) -> Result<MomentVector> {
    let y = series.values();
    if y.len() <= spec.max_lag() {
        return Err(NneError::domain(format!(
            "series of length {} too short for max lag {}",
            y.len(),
            spec.max_lag()
        )));
    }
    Ok(MomentVector::new(
        spec.id(),
        spec.terms().iter().map(|t| t.sample_mean(y)).collect(),
    ))
}

//! Indirect inference for the AR(1) coefficient with an MA(1) auxiliary model.

use serde::{Deserialize, Serialize};

use super::gmm::{common_shocks, match_scalar, GmmResult};
use super::scalar_min::minimize_scalar;
use crate::ar1::{Ar1Series, MomentTerm};
use crate::error::{NneError, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ma1Auxiliary {
    /// Lag-1 autocovariance `(n-1)^-1 sum y_i y_{i-1}`.
    Autocovariance,
    /// Least-squares MA(1) coefficient with `eps_0 = 0`.
    LeastSquares,
}

impl std::str::FromStr for Ma1Auxiliary {
    type Err = NneError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ma1_ac" => Ok(Self::Autocovariance),
            "ma1_ls" => Ok(Self::LeastSquares),
            _ => Err(NneError::Config(format!("unknown auxiliary model {s:?}"))),
        }
    }
}

/// Sum of squared MA(1) residuals `eps_i = y_i - alpha eps_{i-1}`, `eps_0 = 0`.
pub fn ma1_sse(y: &[f64], alpha: f64) -> f64 {
    let mut prev = 0.0;
    let mut sse = 0.0;
    for &v in y {
        let e = v - alpha * prev;
        sse += e * e;
        prev = e;
    }
    sse
}

/// Least-squares MA(1) coefficient on `[-0.99, 0.99]`.
pub fn ma1_ls_estimate(y: &[f64]) -> f64 {
    minimize_scalar(|a| ma1_sse(y, a), -0.99, 0.99, 41, 1e-8).0
}

pub fn auxiliary_statistic(y: &[f64], aux: Ma1Auxiliary) -> f64 {
    match aux {
        Ma1Auxiliary::Autocovariance => MomentTerm::Cross(1).sample_mean(y),
        Ma1Auxiliary::LeastSquares => ma1_ls_estimate(y),
    }
}

/// Matches the auxiliary statistic of `series` to its average over `r`
/// simulated series with fixed shocks. The autocovariance route is the same
/// computation as single-moment SMM with the same `r` and stream.
pub fn indirect_inference_ar1(
    series: &Ar1Series,
    aux: Ma1Auxiliary,
    r: usize,
    stream: &RngStream,
) -> Result<GmmResult> {
    if r == 0 {
        return Err(NneError::domain("indirect inference needs at least one simulated series"));
    }
    if series.len() < 3 {
        return Err(NneError::domain("series too short"));
    }
    let shocks = common_shocks(series.len(), r, stream);
    let observed = auxiliary_statistic(series.values(), aux);
    Ok(match_scalar(observed, &shocks, move |y| auxiliary_statistic(y, aux)))
}

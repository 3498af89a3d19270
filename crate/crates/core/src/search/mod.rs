//! Weitzman sequential-search model with one free search.
//!
//! Consumer `i` sees `J_i` options. Option `j` has utility
//! `u_ij = z_ij'beta + eps_ij` and search cost `exp(delta0 + delta1 ln s_ij)`,
//! where `s_ij` is its rank on the page. The outside option `eta + eps_i0` is
//! known up front. Options are searched in decreasing reservation utility; the
//! first search is free.

mod grid;
pub(crate) mod inequality;
mod moments;
mod reservation;
pub(crate) mod simulate;
mod stats;

pub use grid::{generate_covariates, ConsumerGrid, OptionAttributes, ATTRIBUTE_NAMES, COVARIATE_NAMES};
pub use inequality::{
    for_each_slack, validate_optimality, Inequality, InequalityKind, Violation, ViolationReport,
};
pub use moments::{search_moments, MomentContext, SearchMomentSpec, FULL_MOMENT_COUNT};
pub use reservation::{reservation_offset, reservation_utility, ReservationTable};
pub use simulate::{
    draw_search_shocks, simulate_search, simulate_search_with_shocks, simulate_zero_cost, SearchOutcome,
    SearchShocks,
};
pub use stats::{counterfactual_zero_cost, key_stats, Counterfactual, KeyStats};

use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::params::{ParamSpace, ParamVector};

/// Parameter names in estimation order.
pub const PARAM_NAMES: [&str; 9] = [
    "beta_stars",
    "beta_review",
    "beta_location",
    "beta_chain",
    "beta_promotion",
    "beta_log_price",
    "eta",
    "delta0",
    "delta1",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Weights on stars, review, location, chain, promotion, log price.
    pub beta: [f64; 6],
    /// Mean utility of the outside option.
    pub eta: f64,
    /// Search-cost intercept.
    pub delta0: f64,
    /// Search-cost slope on log rank.
    pub delta1: f64,
}

impl SearchParams {
    /// Monte Carlo truth used throughout the search experiments.
    pub fn monte_carlo_truth() -> Self {
        Self {
            beta: [0.1, 0.0, 0.2, -0.2, 0.2, -0.2],
            eta: 3.0,
            delta0: -4.0,
            delta1: 0.1,
        }
    }

    pub fn from_vector(theta: &ParamVector) -> Result<Self> {
        let v = theta.values();
        if v.len() != 9 {
            return Err(NneError::dimension("search parameters", 9, v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(NneError::domain("search parameters must be finite"));
        }
        Ok(Self {
            beta: [v[0], v[1], v[2], v[3], v[4], v[5]],
            eta: v[6],
            delta0: v[7],
            delta1: v[8],
        })
    }

    pub fn to_vector(&self) -> ParamVector {
        let mut v = self.beta.to_vec();
        v.extend([self.eta, self.delta0, self.delta1]);
        ParamVector::new(v)
    }

    /// Search cost at page rank `rank` (1-based).
    #[inline]
    pub fn search_cost(&self, rank: u32) -> f64 {
        (self.delta0 + self.delta1 * (rank as f64).ln()).exp()
    }

    #[inline]
    pub fn mean_utility(&self, a: &OptionAttributes) -> f64 {
        a.values()
            .iter()
            .zip(&self.beta)
            .map(|(x, b)| x * b)
            .sum()
    }
}

/// Default box: `beta_k in [-0.5, 0.5]`, `eta in [2, 5]`,
/// `delta0 in [-5, -2]`, `delta1 in [-0.25, 0.25]`.
pub fn default_param_space() -> ParamSpace {
    let bounds = PARAM_NAMES.iter().enumerate().map(|(k, n)| {
        let (lo, hi) = match k {
            0..=5 => (-0.5, 0.5),
            6 => (2.0, 5.0),
            7 => (-5.0, -2.0),
            _ => (-0.25, 0.25),
        };
        (*n, lo, hi)
    });
    ParamSpace::from_bounds(bounds).expect("static search space is valid")
}

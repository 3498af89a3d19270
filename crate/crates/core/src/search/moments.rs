//! Moment specifications for the search model.
//!
//! The full 81-moment vector is laid out as
//!
//! | block | size | content |
//! |---|---|---|
//! | A | 2  | mean of `(search_ij, buy_ij)` |
//! | B | 14 | cross-covariance of `(search_ij, buy_ij)` with `x_ij` |
//! | C | 3  | mean of `(nonfree_i, count_i, purchase_i)` |
//! | D | 21 | cross-covariance of those with `J_i^-1 sum_j x_ij` |
//! | E | 6  | covariance of `(nonfree_i, count_i, purchase_i)`, upper triangle row-major |
//! | F | 14 | cross-covariance of `(search_ij, buy_ij)` with `x_ij^2` |
//! | G | 21 | cross-covariance of consumer outcomes with `J_i^-1 sum_j x_ij^2` |
//!
//! where `x_ij` is the 7 covariates in [`COVARIATE_NAMES`](super::COVARIATE_NAMES)
//! and `nonfree_i` flags a consumer with at least one paid search. Within B, D,
//! F and G the outcome index is the slow one. Every covariance divides by the
//! number of terms. Smaller specifications are index subsets of this layout.

use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::params::MomentVector;

use super::{ConsumerGrid, SearchOutcome};

pub const FULL_MOMENT_COUNT: usize = 81;
const NX: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SearchMomentSpec {
    M16,
    M32,
    M40,
    M46,
    M60,
    M81,
}

impl SearchMomentSpec {
    pub const ALL: [Self; 6] = [Self::M16, Self::M32, Self::M40, Self::M46, Self::M60, Self::M81];

    pub fn len(self) -> usize {
        match self {
            Self::M16 => 16,
            Self::M32 => 32,
            Self::M40 => 40,
            Self::M46 => 46,
            Self::M60 => 60,
            Self::M81 => 81,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::M16 => "m16",
            Self::M32 => "m32",
            Self::M40 => "m40",
            Self::M46 => "m46",
            Self::M60 => "m60",
            Self::M81 => "m81",
        }
    }

    /// Positions of this specification's moments within the full layout.
    pub fn indices(self) -> Vec<usize> {
        match self {
            Self::M32 => (0..16).chain(17..19).chain(26..40).collect(),
            other => (0..other.len()).collect(),
        }
    }

    /// Picks this specification's entries out of a full 81-vector.
    pub fn select(self, full: &[f64]) -> Vec<f64> {
        debug_assert_eq!(full.len(), FULL_MOMENT_COUNT);
        self.indices().into_iter().map(|k| full[k]).collect()
    }
}

impl std::str::FromStr for SearchMomentSpec {
    type Err = NneError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let s = s.strip_prefix("std").unwrap_or(&s);
        let n = s.trim_start_matches('m');
        Self::ALL
            .iter()
            .copied()
            .find(|spec| spec.len().to_string() == n)
            .ok_or_else(|| NneError::Config(format!("unknown search moment spec {s:?}")))
    }
}

/// Centered covariates for one grid, computed once and reused for every
/// simulated dataset on that grid.
#[derive(Clone, Debug)]
pub struct MomentContext {
    n_consumers: usize,
    offsets: Vec<usize>,
    /// Per option: centered `x` then centered `x^2`.
    option_x: Vec<[f64; 2 * NX]>,
    /// Per consumer: centered option-average of `x` then of `x^2`.
    consumer_x: Vec<[f64; 2 * NX]>,
}

fn center(rows: &mut [[f64; 2 * NX]]) {
    let n = rows.len() as f64;
    let mut mean = [0.0; 2 * NX];
    for r in rows.iter() {
        for k in 0..2 * NX {
            mean[k] += r[k];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for r in rows.iter_mut() {
        for k in 0..2 * NX {
            r[k] -= mean[k];
        }
    }
}

impl MomentContext {
    pub fn new(grid: &ConsumerGrid) -> Self {
        let n = grid.n_consumers();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut option_x = Vec::with_capacity(grid.n_options_total());
        let mut consumer_x = Vec::with_capacity(n);
        for i in 0..n {
            let mut avg = [0.0; 2 * NX];
            for g in grid.range(i) {
                let x = grid.covariates(g);
                let mut row = [0.0; 2 * NX];
                for k in 0..NX {
                    row[k] = x[k];
                    row[NX + k] = x[k] * x[k];
                }
                for k in 0..2 * NX {
                    avg[k] += row[k];
                }
                option_x.push(row);
            }
            let j = grid.n_options(i) as f64;
            for a in &mut avg {
                *a /= j;
            }
            consumer_x.push(avg);
            offsets.push(option_x.len());
        }
        center(&mut option_x);
        center(&mut consumer_x);
        Self {
            n_consumers: n,
            offsets,
            option_x,
            consumer_x,
        }
    }

    pub fn n_consumers(&self) -> usize {
        self.n_consumers
    }

    /// The full 81-moment vector.
    pub fn full_moments(&self, outcomes: &[SearchOutcome]) -> Result<Vec<f64>> {
        if outcomes.len() != self.n_consumers {
            return Err(NneError::dimension("outcomes", self.n_consumers, outcomes.len()));
        }
        let n_opt = self.option_x.len() as f64;
        let n = self.n_consumers as f64;

        let mut sum_search = 0.0;
        let mut sum_buy = 0.0;
        // cross sums with centered x and x^2, for search and buy
        let mut cs = [0.0; 2 * NX];
        let mut cb = [0.0; 2 * NX];
        let mut ytilde = Vec::with_capacity(outcomes.len());
        for (i, o) in outcomes.iter().enumerate() {
            let base = self.offsets[i];
            let j_i = self.offsets[i + 1] - base;
            for &j in &o.search_order {
                if j >= j_i {
                    return Err(NneError::domain(format!("consumer {i}: option {j} out of range")));
                }
                let row = &self.option_x[base + j];
                for k in 0..2 * NX {
                    cs[k] += row[k];
                }
            }
            sum_search += o.search_order.len() as f64;
            if let Some(b) = o.bought {
                if b >= j_i {
                    return Err(NneError::domain(format!("consumer {i}: option {b} out of range")));
                }
                let row = &self.option_x[base + b];
                for k in 0..2 * NX {
                    cb[k] += row[k];
                }
                sum_buy += 1.0;
            }
            let count = o.search_order.len() as f64;
            ytilde.push([
                if count >= 2.0 { 1.0 } else { 0.0 },
                count,
                if o.bought.is_some() { 1.0 } else { 0.0 },
            ]);
        }

        let mut yt_mean = [0.0; 3];
        for y in &ytilde {
            for a in 0..3 {
                yt_mean[a] += y[a];
            }
        }
        for m in &mut yt_mean {
            *m /= n;
        }
        // consumer-level cross sums (centered x makes the y mean drop out) and covariance
        let mut cd = [[0.0; 2 * NX]; 3];
        let mut cov = [[0.0; 3]; 3];
        for (y, xr) in ytilde.iter().zip(&self.consumer_x) {
            let yc = [y[0] - yt_mean[0], y[1] - yt_mean[1], y[2] - yt_mean[2]];
            for a in 0..3 {
                for k in 0..2 * NX {
                    cd[a][k] += y[a] * xr[k];
                }
                for b in a..3 {
                    cov[a][b] += yc[a] * yc[b];
                }
            }
        }

        let mut m = Vec::with_capacity(FULL_MOMENT_COUNT);
        m.push(sum_search / n_opt);
        m.push(sum_buy / n_opt);
        m.extend(cs[..NX].iter().map(|v| v / n_opt));
        m.extend(cb[..NX].iter().map(|v| v / n_opt));
        m.extend(yt_mean);
        for row in &cd {
            m.extend(row[..NX].iter().map(|v| v / n));
        }
        for a in 0..3 {
            for b in a..3 {
                m.push(cov[a][b] / n);
            }
        }
        m.extend(cs[NX..].iter().map(|v| v / n_opt));
        m.extend(cb[NX..].iter().map(|v| v / n_opt));
        for row in &cd {
            m.extend(row[NX..].iter().map(|v| v / n));
        }
        debug_assert_eq!(m.len(), FULL_MOMENT_COUNT);
        Ok(m)
    }

    pub fn moments(&self, outcomes: &[SearchOutcome], spec: SearchMomentSpec) -> Result<MomentVector> {
        let full = self.full_moments(outcomes)?;
        Ok(MomentVector::new(spec.id(), spec.select(&full)))
    }
}

/// Moments of one dataset under `spec`.
pub fn search_moments(
    grid: &ConsumerGrid,
    outcomes: &[SearchOutcome],
    spec: SearchMomentSpec,
) -> Result<MomentVector> {
    MomentContext::new(grid).moments(outcomes, spec)
}

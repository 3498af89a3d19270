use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::rng::RngStream;

use super::{ConsumerGrid, ReservationTable, SearchParams};

/// Searches and purchase of one consumer. Indices are local to the consumer's option list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Searched options in the order searched; the first one was free.
    pub search_order: Vec<usize>,
    /// Purchased option, or `None` for the outside option.
    pub bought: Option<usize>,
}

impl SearchOutcome {
    pub fn n_searched(&self) -> usize {
        self.search_order.len()
    }

    pub fn searched_mask(&self, n_options: usize) -> Vec<bool> {
        let mut m = vec![false; n_options];
        for &j in &self.search_order {
            m[j] = true;
        }
        m
    }

    pub fn bought_mask(&self, n_options: usize) -> Vec<bool> {
        let mut m = vec![false; n_options];
        if let Some(b) = self.bought {
            m[b] = true;
        }
        m
    }

    /// Structural checks: nonempty distinct in-range searches, purchase among them.
    pub fn check(&self, n_options: usize) -> Result<()> {
        if self.search_order.is_empty() {
            return Err(NneError::domain("consumer made no search"));
        }
        let mut seen = vec![false; n_options];
        for &j in &self.search_order {
            if j >= n_options || seen[j] {
                return Err(NneError::domain(format!(
                    "search order has out-of-range or repeated option {j}"
                )));
            }
            seen[j] = true;
        }
        if let Some(b) = self.bought {
            if b >= n_options || !seen[b] {
                return Err(NneError::domain(format!("bought option {b} was not searched")));
            }
        }
        Ok(())
    }
}

/// Utility shocks for one dataset: per consumer the outside shock followed by one per option.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchShocks {
    values: Vec<f64>,
    starts: Vec<usize>,
}

impl SearchShocks {
    pub fn n_consumers(&self) -> usize {
        self.starts.len() - 1
    }

    /// `(eps_i0, [eps_i1, ..., eps_iJ])`.
    #[inline]
    pub fn consumer(&self, i: usize) -> (f64, &[f64]) {
        let s = &self.values[self.starts[i]..self.starts[i + 1]];
        (s[0], &s[1..])
    }

    /// Wraps explicit shocks; `per_consumer[i]` holds `1 + J_i` values.
    pub fn from_consumers(grid: &ConsumerGrid, per_consumer: &[Vec<f64>]) -> Result<Self> {
        if per_consumer.len() != grid.n_consumers() {
            return Err(NneError::dimension("shock consumers", grid.n_consumers(), per_consumer.len()));
        }
        let mut values = Vec::new();
        let mut starts = vec![0];
        for (i, s) in per_consumer.iter().enumerate() {
            if s.len() != grid.n_options(i) + 1 {
                return Err(NneError::dimension("shocks per consumer", grid.n_options(i) + 1, s.len()));
            }
            values.extend_from_slice(s);
            starts.push(values.len());
        }
        Ok(Self { values, starts })
    }
}

/// Draws i.i.d. standard normal shocks for every option and outside option.
pub fn draw_search_shocks<R: Rng + ?Sized>(grid: &ConsumerGrid, rng: &mut R) -> SearchShocks {
    let n = grid.n_consumers();
    let mut values = Vec::with_capacity(grid.n_options_total() + n);
    let mut starts = Vec::with_capacity(n + 1);
    starts.push(0);
    for i in 0..n {
        for _ in 0..=grid.n_options(i) {
            values.push(rng.sample(StandardNormal));
        }
        starts.push(values.len());
    }
    SearchShocks { values, starts }
}

/// Per-consumer scratch shared by the simulator, the validator and the smoothed likelihood.
#[derive(Default)]
pub(crate) struct ConsumerScratch {
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub searched: Vec<bool>,
}

impl ConsumerScratch {
    /// Fills mean utilities and reservation utilities for consumer `i`.
    pub fn load(&mut self, params: &SearchParams, table: &ReservationTable, grid: &ConsumerGrid, i: usize) {
        let attrs = grid.attributes(i);
        let ranks = grid.ranks(i);
        self.v.clear();
        self.z.clear();
        for (a, &r) in attrs.iter().zip(ranks) {
            let v = params.mean_utility(a);
            self.v.push(v);
            self.z.push(v + table.offset(r));
        }
        self.searched.clear();
        self.searched.resize(attrs.len(), false);
    }
}

/// Highest reservation utility among options not yet searched; ties go to the
/// better (lower) rank, then the lower index.
#[inline]
pub(crate) fn best_unsearched(z: &[f64], ranks: &[u32], searched: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 0..z.len() {
        if searched[j] {
            continue;
        }
        best = match best {
            None => Some(j),
            Some(b) => {
                if z[j] > z[b] || (z[j] == z[b] && ranks[j] < ranks[b]) {
                    Some(j)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

fn simulate_consumer(
    scratch: &mut ConsumerScratch,
    ranks: &[u32],
    u0: f64,
    eps: &[f64],
) -> SearchOutcome {
    let first = best_unsearched(&scratch.z, ranks, &scratch.searched).expect("at least one option");
    scratch.searched[first] = true;
    let mut order = vec![first];
    let mut best_u = scratch.v[first] + eps[first];
    let mut best_opt = first;
    while let Some(next) = best_unsearched(&scratch.z, ranks, &scratch.searched) {
        if best_u.max(u0) >= scratch.z[next] {
            break;
        }
        scratch.searched[next] = true;
        order.push(next);
        let u = scratch.v[next] + eps[next];
        if u > best_u {
            best_u = u;
            best_opt = next;
        }
    }
    SearchOutcome {
        search_order: order,
        bought: (best_u > u0).then_some(best_opt),
    }
}

/// Optimal search and purchase under the given shocks.
pub fn simulate_search_with_shocks(
    params: &SearchParams,
    grid: &ConsumerGrid,
    shocks: &SearchShocks,
) -> Result<Vec<SearchOutcome>> {
    if shocks.n_consumers() != grid.n_consumers() {
        return Err(NneError::dimension("shock consumers", grid.n_consumers(), shocks.n_consumers()));
    }
    let table = ReservationTable::new(params, grid.max_options())?;
    let mut scratch = ConsumerScratch::default();
    let mut out = Vec::with_capacity(grid.n_consumers());
    for i in 0..grid.n_consumers() {
        scratch.load(params, &table, grid, i);
        let (e0, eps) = shocks.consumer(i);
        out.push(simulate_consumer(&mut scratch, grid.ranks(i), params.eta + e0, eps));
    }
    Ok(out)
}

/// Draws shocks from `stream` and simulates every consumer.
pub fn simulate_search(
    params: &SearchParams,
    grid: &ConsumerGrid,
    stream: &RngStream,
) -> Result<Vec<SearchOutcome>> {
    let shocks = draw_search_shocks(grid, &mut stream.rng());
    simulate_search_with_shocks(params, grid, &shocks)
}

/// Purchases when search is free: every option is inspected and the best one
/// is bought if it beats the outside option. Returns one flag per consumer.
pub fn simulate_zero_cost(params: &SearchParams, grid: &ConsumerGrid, shocks: &SearchShocks) -> Vec<bool> {
    (0..grid.n_consumers())
        .map(|i| {
            let (e0, eps) = shocks.consumer(i);
            let best = grid
                .attributes(i)
                .iter()
                .zip(eps)
                .map(|(a, e)| params.mean_utility(a) + e)
                .fold(f64::NEG_INFINITY, f64::max);
            best > params.eta + e0
        })
        .collect()
}

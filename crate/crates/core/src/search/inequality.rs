//! Inequalities characterizing an optimal search-and-purchase outcome.
//!
//! Given reservation utilities `z` and realized utilities, an outcome with
//! search order `o_1..o_K` and purchase `b` is optimal exactly when
//!
//! * ordering: `z[o_k] >= z[o_{k+1}]`, and `z[o_K] >= z[j]` for every unsearched `j`;
//! * continuation: before each paid search `k >= 2`, the best utility so far
//!   (outside option included) is below `z[o_k]`;
//! * stopping: if options remain, the best utility found is at least the best
//!   remaining reservation utility;
//! * purchase: the chosen alternative has the highest utility among the
//!   searched options and the outside option.
//!
//! Each inequality is reported as a slack that is nonnegative when satisfied.

use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};

use super::simulate::ConsumerScratch;
use super::{ConsumerGrid, ReservationTable, SearchOutcome, SearchParams, SearchShocks};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InequalityKind {
    Ordering,
    Continuation,
    Stopping,
    Purchase,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub kind: InequalityKind,
    pub slack: f64,
}

impl Inequality {
    /// Continuation must hold strictly; the others allow equality.
    pub fn is_violated(&self) -> bool {
        match self.kind {
            InequalityKind::Continuation => self.slack <= 0.0,
            _ => self.slack < 0.0,
        }
    }
}

/// Largest reservation utility among options outside the search set.
#[inline]
pub(crate) fn max_unsearched_z(z: &[f64], searched: &[bool]) -> Option<f64> {
    z.iter()
        .zip(searched)
        .filter(|(_, s)| !**s)
        .map(|(v, _)| *v)
        .reduce(f64::max)
}

/// Ordering inequalities; they involve only reservation utilities.
#[inline]
pub(crate) fn ordering_slacks(
    z: &[f64],
    outcome: &SearchOutcome,
    max_unsearched: Option<f64>,
    mut f: impl FnMut(Inequality),
) {
    let order = &outcome.search_order;
    for w in order.windows(2) {
        f(Inequality {
            kind: InequalityKind::Ordering,
            slack: z[w[0]] - z[w[1]],
        });
    }
    if let (Some(&last), Some(rest)) = (order.last(), max_unsearched) {
        f(Inequality {
            kind: InequalityKind::Ordering,
            slack: z[last] - rest,
        });
    }
}

/// Continuation, stopping and purchase inequalities. `u_searched[k]` is the
/// realized utility of the k-th searched option.
#[inline]
pub(crate) fn utility_slacks(
    z: &[f64],
    outcome: &SearchOutcome,
    max_unsearched: Option<f64>,
    u_searched: &[f64],
    u0: f64,
    mut f: impl FnMut(Inequality),
) {
    let order = &outcome.search_order;
    let mut best = u0.max(u_searched[0]);
    for k in 1..order.len() {
        f(Inequality {
            kind: InequalityKind::Continuation,
            slack: z[order[k]] - best,
        });
        best = best.max(u_searched[k]);
    }
    if let Some(rest) = max_unsearched {
        f(Inequality {
            kind: InequalityKind::Stopping,
            slack: best - rest,
        });
    }
    let slack = match outcome.bought {
        Some(b) => {
            let mut chosen = f64::NAN;
            let mut others = u0;
            for (k, &j) in order.iter().enumerate() {
                if j == b {
                    chosen = u_searched[k];
                } else {
                    others = others.max(u_searched[k]);
                }
            }
            chosen - others
        }
        None => u0 - u_searched.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    f(Inequality {
        kind: InequalityKind::Purchase,
        slack,
    });
}

/// Visits every inequality for one consumer.
pub fn for_each_slack(
    z: &[f64],
    outcome: &SearchOutcome,
    u_searched: &[f64],
    u0: f64,
    mut f: impl FnMut(Inequality),
) {
    let mut searched = vec![false; z.len()];
    for &j in &outcome.search_order {
        searched[j] = true;
    }
    let rest = max_unsearched_z(z, &searched);
    ordering_slacks(z, outcome, rest, &mut f);
    utility_slacks(z, outcome, rest, u_searched, u0, &mut f);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub consumer: usize,
    pub kind: InequalityKind,
    pub slack: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub consumers_checked: usize,
    pub inequalities_checked: usize,
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn count(&self) -> usize {
        self.violations.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count_kind(&self, kind: InequalityKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Checks every consumer's outcome against the inequality set under the
/// shocks that generated it.
pub fn validate_optimality(
    params: &SearchParams,
    grid: &ConsumerGrid,
    shocks: &SearchShocks,
    outcomes: &[SearchOutcome],
) -> Result<ViolationReport> {
    if outcomes.len() != grid.n_consumers() {
        return Err(NneError::dimension("outcomes", grid.n_consumers(), outcomes.len()));
    }
    if shocks.n_consumers() != grid.n_consumers() {
        return Err(NneError::dimension("shock consumers", grid.n_consumers(), shocks.n_consumers()));
    }
    let table = ReservationTable::new(params, grid.max_options())?;
    let mut scratch = ConsumerScratch::default();
    let mut report = ViolationReport::default();
    let mut u_searched = Vec::new();
    for (i, outcome) in outcomes.iter().enumerate() {
        outcome.check(grid.n_options(i))?;
        scratch.load(params, &table, grid, i);
        let (e0, eps) = shocks.consumer(i);
        u_searched.clear();
        u_searched.extend(outcome.search_order.iter().map(|&j| scratch.v[j] + eps[j]));
        for_each_slack(&scratch.z, outcome, &u_searched, params.eta + e0, |q| {
            report.inequalities_checked += 1;
            if q.is_violated() {
                report.violations.push(Violation {
                    consumer: i,
                    kind: q.kind,
                    slack: q.slack,
                });
            }
        });
        report.consumers_checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::search::{draw_search_shocks, generate_covariates, simulate_search_with_shocks};

    fn setup() -> (SearchParams, ConsumerGrid, SearchShocks, Vec<SearchOutcome>) {
        let grid = generate_covariates(400, 30, &RngStream::new(21)).unwrap();
        let mut p = SearchParams::monte_carlo_truth();
        p.delta0 = -4.5;
        let shocks = draw_search_shocks(&grid, &mut RngStream::new(22).rng());
        let out = simulate_search_with_shocks(&p, &grid, &shocks).unwrap();
        (p, grid, shocks, out)
    }

    #[test]
    fn simulated_outcomes_are_clean() {
        let (p, grid, shocks, out) = setup();
        let rep = validate_optimality(&p, &grid, &shocks, &out).unwrap();
        assert_eq!(rep.count(), 0, "{:?}", rep.violations.first());
        assert_eq!(rep.consumers_checked, 400);
    }

    #[test]
    fn wrong_purchase_is_flagged() {
        let (p, grid, shocks, mut out) = setup();
        let i = out
            .iter()
            .position(|o| o.n_searched() >= 2 && o.bought.is_some())
            .expect("a consumer with two searches and a purchase");
        let b = out[i].bought.unwrap();
        let other = *out[i].search_order.iter().find(|&&j| j != b).unwrap();
        out[i].bought = Some(other);
        let rep = validate_optimality(&p, &grid, &shocks, &out).unwrap();
        assert!(rep.count_kind(InequalityKind::Purchase) >= 1);
        assert!(rep.violations.iter().all(|v| v.consumer == i));
    }

    #[test]
    fn swapped_paid_searches_are_flagged() {
        let (p, grid, shocks, mut out) = setup();
        let i = out
            .iter()
            .position(|o| o.n_searched() >= 3)
            .expect("a consumer with two paid searches");
        out[i].search_order.swap(1, 2);
        let rep = validate_optimality(&p, &grid, &shocks, &out).unwrap();
        assert!(rep.count_kind(InequalityKind::Ordering) >= 1);
    }

    #[test]
    fn premature_stop_is_flagged() {
        let (p, grid, shocks, mut out) = setup();
        let i = out
            .iter()
            .position(|o| o.n_searched() >= 2 && o.bought.is_none_or(|b| b == o.search_order[0]))
            .expect("consumer with a paid search");
        out[i].search_order.truncate(1);
        let rep = validate_optimality(&p, &grid, &shocks, &out).unwrap();
        assert!(rep.count_kind(InequalityKind::Stopping) >= 1);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let (p, grid, shocks, out) = setup();
        assert!(validate_optimality(&p, &grid, &shocks, &out[..10]).is_err());
    }
}

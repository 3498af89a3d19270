//! Smoothed simulated maximum likelihood for the search model.
//!
//! For each consumer and each of `R` shock draws, the observed search order
//! and purchase are scored by the product of `logistic(lambda * slack)` over
//! the optimality inequalities; a consumer's likelihood is the mean score,
//! floored at `1e-12`. Draws are fixed across parameter values.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::simplex::NelderMead;
use crate::error::{NneError, Result};
use crate::params::{ParamSpace, ParamVector};
use crate::rng::RngStream;
use crate::search::inequality::{max_unsearched_z, ordering_slacks, utility_slacks};
use crate::search::simulate::ConsumerScratch;
use crate::search::{
    default_param_space, draw_search_shocks, ConsumerGrid, ReservationTable, SearchOutcome, SearchParams,
    SearchShocks,
};

pub const LIKELIHOOD_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmleSpec {
    pub lambda: f64,
    pub r: usize,
    /// Starting point; the centre of `space` when absent.
    pub start: Option<ParamVector>,
    /// Box used for the starting point and the initial simplex size.
    pub space: ParamSpace,
    pub max_evals: usize,
    /// Compute Hessian standard errors at the optimum.
    pub std_errors: bool,
}

impl SmleSpec {
    pub fn new(lambda: f64, r: usize) -> Self {
        Self {
            lambda,
            r,
            start: None,
            space: default_param_space(),
            max_evals: 1500,
            std_errors: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || self.r == 0 {
            return Err(NneError::Config("SMLE needs lambda > 0 and R >= 1".into()));
        }
        Ok(())
    }
}

/// `ln logistic(x)` without overflow.
#[inline]
fn ln_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Shock draws, fixed across parameter values.
pub fn draw_smle_shocks(grid: &ConsumerGrid, r: usize, stream: &RngStream) -> Vec<SearchShocks> {
    (0..r as u64)
        .map(|k| draw_search_shocks(grid, &mut stream.substream(k).rng()))
        .collect()
}

/// Smoothed likelihood of each consumer's outcome. `lambda = 0` scores every
/// inequality at one half.
pub fn consumer_likelihoods(
    params: &SearchParams,
    grid: &ConsumerGrid,
    outcomes: &[SearchOutcome],
    lambda: f64,
    draws: &[SearchShocks],
) -> Result<Vec<f64>> {
    if outcomes.len() != grid.n_consumers() {
        return Err(NneError::dimension("outcomes", grid.n_consumers(), outcomes.len()));
    }
    if draws.is_empty() {
        return Err(NneError::domain("no simulation draws"));
    }
    if let Some(d) = draws.iter().find(|d| d.n_consumers() != grid.n_consumers()) {
        return Err(NneError::dimension("draw consumers", grid.n_consumers(), d.n_consumers()));
    }
    let table = ReservationTable::new(params, grid.max_options())?;
    let mut scratch = ConsumerScratch::default();
    let mut u = Vec::new();
    let mut out = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        o.check(grid.n_options(i))?;
        scratch.load(params, &table, grid, i);
        for &j in &o.search_order {
            scratch.searched[j] = true;
        }
        let rest = max_unsearched_z(&scratch.z, &scratch.searched);
        let mut fixed = 0.0;
        ordering_slacks(&scratch.z, o, rest, |q| fixed += ln_logistic(lambda * q.slack));
        let mut total = 0.0;
        for d in draws {
            let (e0, eps) = d.consumer(i);
            u.clear();
            u.extend(o.search_order.iter().map(|&j| scratch.v[j] + eps[j]));
            let mut s = fixed;
            utility_slacks(&scratch.z, o, rest, &u, params.eta + e0, |q| s += ln_logistic(lambda * q.slack));
            total += s.exp();
        }
        out.push((total / draws.len() as f64).max(LIKELIHOOD_FLOOR));
    }
    Ok(out)
}

/// Smoothed log-likelihood with explicit draws.
pub fn smoothed_loglik_with_draws(
    params: &SearchParams,
    grid: &ConsumerGrid,
    outcomes: &[SearchOutcome],
    lambda: f64,
    draws: &[SearchShocks],
) -> Result<f64> {
    Ok(consumer_likelihoods(params, grid, outcomes, lambda, draws)?
        .iter()
        .map(|l| l.ln())
        .sum())
}

/// Smoothed log-likelihood with `r` draws from `stream`.
pub fn smoothed_loglik(
    theta: &ParamVector,
    grid: &ConsumerGrid,
    outcomes: &[SearchOutcome],
    lambda: f64,
    r: usize,
    stream: &RngStream,
) -> Result<f64> {
    let draws = draw_smle_shocks(grid, r, stream);
    smoothed_loglik_with_draws(&SearchParams::from_vector(theta)?, grid, outcomes, lambda, &draws)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmleResult {
    pub theta: ParamVector,
    /// Asymptotic standard errors from the inverse numerical Hessian; absent
    /// when the Hessian is not negative definite at the optimum.
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    pub evals: usize,
    pub converged: bool,
    /// Model simulations consumed: `R` times objective evaluations.
    pub sim_burden: usize,
}

/// Numerical Hessian by central differences.
fn hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let p = x.len();
    let f0 = f(x);
    let mut hm = DMatrix::zeros(p, p);
    let mut pt = x.to_vec();
    for a in 0..p {
        pt[a] = x[a] + h[a];
        let fp = f(&pt);
        pt[a] = x[a] - h[a];
        let fm = f(&pt);
        pt[a] = x[a];
        hm[(a, a)] = (fp - 2.0 * f0 + fm) / (h[a] * h[a]);
        for b in 0..a {
            let mut g = |sa: f64, sb: f64| {
                pt[a] = x[a] + sa * h[a];
                pt[b] = x[b] + sb * h[b];
                let v = f(&pt);
                pt[a] = x[a];
                pt[b] = x[b];
                v
            };
            let v = (g(1.0, 1.0) - g(1.0, -1.0) - g(-1.0, 1.0) + g(-1.0, -1.0)) / (4.0 * h[a] * h[b]);
            hm[(a, b)] = v;
            hm[(b, a)] = v;
        }
    }
    hm
}

/// Standard errors from the inverse of the negative Hessian of the log-likelihood.
pub fn hessian_std_errors<F: FnMut(&[f64]) -> f64>(mut loglik: F, x: &[f64]) -> Option<Vec<f64>> {
    let h: Vec<f64> = x.iter().map(|v| 1e-3 * v.abs().max(1.0)).collect();
    let info = -hessian(&mut loglik, x, &h);
    let inv = info.cholesky()?.inverse();
    let se: Vec<f64> = (0..x.len()).map(|k| inv[(k, k)].sqrt()).collect();
    se.iter().all(|s| s.is_finite()).then_some(se)
}

/// Maximizes the smoothed log-likelihood with the simplex method from
/// `spec.start`, then computes standard errors at the optimum.
pub fn smle_search(
    grid: &ConsumerGrid,
    outcomes: &[SearchOutcome],
    spec: &SmleSpec,
    stream: &RngStream,
) -> Result<SmleResult> {
    spec.validate()?;
    let draws = draw_smle_shocks(grid, spec.r, stream);
    let mut loglik = |x: &[f64]| -> f64 {
        match SearchParams::from_vector(&ParamVector::new(x.to_vec())) {
            Ok(p) => smoothed_loglik_with_draws(&p, grid, outcomes, spec.lambda, &draws).unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    // surface structural errors before optimizing
    smoothed_loglik_with_draws(
        &SearchParams::from_vector(&spec.space.center())?,
        grid,
        outcomes,
        spec.lambda,
        &draws,
    )?;
    let start = spec.start.clone().unwrap_or_else(|| spec.space.center());
    let step: Vec<f64> = spec
        .space
        .lower()
        .iter()
        .zip(spec.space.upper())
        .map(|(lo, hi)| 0.1 * (hi - lo))
        .collect();
    let nm = NelderMead::<f64> {
        max_evals: spec.max_evals,
        f_tol: 1e-6,
        x_tol: 1e-4,
    };
    let res = nm.minimize(|x| -loglik(x), start.values(), &step);
    let se = if spec.std_errors { hessian_std_errors(&mut loglik, &res.x) } else { None };
    Ok(SmleResult {
        theta: ParamVector::new(res.x),
        std_errors: se,
        loglik: -res.f,
        evals: res.evals,
        converged: res.converged,
        sim_burden: spec.r * res.evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{generate_covariates, simulate_search, simulate_search_with_shocks, OptionAttributes};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn zero_lambda_scores_one_half_per_inequality() {
        let grid = generate_covariates(20, 5, &RngStream::new(1)).unwrap();
        let p = SearchParams::monte_carlo_truth();
        let outcomes = simulate_search(&p, &grid, &RngStream::new(2)).unwrap();
        let draws = draw_smle_shocks(&grid, 3, &RngStream::new(3));
        let l = consumer_likelihoods(&p, &grid, &outcomes, 0.0, &draws).unwrap();
        for (i, o) in outcomes.iter().enumerate() {
            let k = o.n_searched();
            let unsearched = k < grid.n_options(i);
            // orderings: k-1 pairs (+1 vs unsearched); continuation k-1; stopping; purchase
            let count = (k - 1) + unsearched as usize + (k - 1) + unsearched as usize + 1;
            assert!((l[i] - 0.5f64.powi(count as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let grid = generate_covariates(60, 8, &RngStream::new(4)).unwrap();
        let p = SearchParams::monte_carlo_truth();
        let outcomes = simulate_search(&p, &grid, &RngStream::new(5)).unwrap();
        let theta = p.to_vector();
        let a = smoothed_loglik(&theta, &grid, &outcomes, 7.0, 10, &RngStream::new(6)).unwrap();
        let b = smoothed_loglik(&theta, &grid, &outcomes, 7.0, 10, &RngStream::new(6)).unwrap();
        assert_eq!(a, b);
        // reversing consumers together with their draws leaves the sum unchanged
        let draws = draw_smle_shocks(&grid, 10, &RngStream::new(6));
        let perm: Vec<usize> = (0..60).rev().collect();
        let g2 = grid.select(&perm);
        let o2: Vec<_> = perm.iter().map(|&i| outcomes[i].clone()).collect();
        let d2: Vec<SearchShocks> = draws
            .iter()
            .map(|d| {
                let per: Vec<Vec<f64>> = perm
                    .iter()
                    .map(|&i| {
                        let (e0, e) = d.consumer(i);
                        std::iter::once(e0).chain(e.iter().cloned()).collect()
                    })
                    .collect();
                SearchShocks::from_consumers(&g2, &per).unwrap()
            })
            .collect();
        let l1 = smoothed_loglik_with_draws(&p, &grid, &outcomes, 7.0, &draws).unwrap();
        let l2 = smoothed_loglik_with_draws(&p, &g2, &o2, 7.0, &d2).unwrap();
        assert!((l1 - l2).abs() < 1e-9 * l1.abs());
        assert!((l1 - a).abs() < 1e-9 * a.abs());
    }

    /// One consumer, two options, shocks on a K-point equal-probability grid
    /// per dimension: at large lambda the smoothed likelihood of each outcome
    /// equals the share of grid points producing it.
    #[test]
    fn large_lambda_matches_enumeration() {
        let grid = ConsumerGrid::from_consumers(vec![vec![
            (OptionAttributes([4.0, 4.0, 4.0, 1.0, 1.0, 0.1]), 1),
            (OptionAttributes([3.0, 4.5, 4.2, 0.0, 1.0, 0.3]), 2),
        ]])
        .unwrap();
        let p = SearchParams {
            beta: [0.1, 0.0, 0.2, -0.2, 0.2, -0.2],
            eta: 1.6,
            delta0: -1.5,
            delta1: 0.1,
        };
        let k = 24;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let support: Vec<f64> = (0..k).map(|i| normal.inverse_cdf((i as f64 + 0.5) / k as f64)).collect();
        let mut draws = Vec::new();
        let mut outcomes_per_draw = Vec::new();
        for &a in &support {
            for &b in &support {
                for &c in &support {
                    let s = SearchShocks::from_consumers(&grid, &[vec![a, b, c]]).unwrap();
                    outcomes_per_draw.push(simulate_search_with_shocks(&p, &grid, &s).unwrap().remove(0));
                    draws.push(s);
                }
            }
        }
        let mut distinct: Vec<SearchOutcome> = outcomes_per_draw.clone();
        distinct.sort_by_key(|o| (o.search_order.clone(), o.bought));
        distinct.dedup();
        assert!(distinct.len() >= 4, "instance should produce varied outcomes");
        let mut total = 0.0;
        for o in &distinct {
            let exact = outcomes_per_draw.iter().filter(|x| *x == o).count() as f64 / draws.len() as f64;
            let smooth = consumer_likelihoods(&p, &grid, std::slice::from_ref(o), 1e6, &draws).unwrap()[0];
            assert!((smooth - exact).abs() < 1e-3, "{o:?}: smoothed {smooth} vs exact {exact}");
            total += exact;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_standard_errors_of_a_gaussian() {
        // log-likelihood of N(mu, s^2 I) in mu has inverse information s^2
        let se = hessian_std_errors(|x| -0.5 * (x[0] * x[0] / 4.0 + x[1] * x[1] / 0.25), &[0.0, 0.0]).unwrap();
        assert!((se[0] - 2.0).abs() < 1e-4 && (se[1] - 0.5).abs() < 1e-4, "{se:?}");
        assert!(hessian_std_errors(|x| x[0] * x[0], &[0.0]).is_none());
    }
}

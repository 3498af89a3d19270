//! Two-step GMM and SMM for the AR(1) coefficient.
//!
//! The first step uses the identity weight; the second weights by the inverse
//! of a Newey–West long-run covariance of the per-observation moment
//! contributions, with lag truncation two beyond the largest moment lag. With
//! a single moment the weight is irrelevant and the first step is final.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::scalar_min::minimize_scalar;
use crate::ar1::{draw_shocks, series_from_shocks, Ar1MomentSpec, Ar1Series, MomentTerm};
use crate::error::{NneError, Result};
use crate::rng::RngStream;

/// Upper end of the search interval for the coefficient.
pub const BETA_MAX: f64 = 0.999;
const GRID: usize = 200;
const TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    Identity,
    TwoStepHac,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub moments: Ar1MomentSpec,
    pub weighting: Weighting,
}

impl GmmSpec {
    pub fn two_step(moments: Ar1MomentSpec) -> Self {
        Self {
            moments,
            weighting: Weighting::TwoStepHac,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmResult {
    pub beta: f64,
    /// Square root of the final quadratic form.
    pub objective: f64,
    /// The minimizer sits on an end of `[0, BETA_MAX]`.
    pub at_bound: bool,
}

/// Solves `m = beta / (1 - beta^2)` for `beta`, clamped to `[0, BETA_MAX]`.
pub fn invert_lag1_moment(m: f64) -> f64 {
    if !(m > 0.0) {
        return 0.0;
    }
    let b = (-1.0 + (1.0 + 4.0 * m * m).sqrt()) / (2.0 * m);
    b.clamp(0.0, BETA_MAX)
}

/// Per-observation moment contributions over the indices where every lag is
/// available, one row per observation.
pub fn moment_contributions(y: &[f64], spec: Ar1MomentSpec) -> Vec<Vec<f64>> {
    let terms = spec.terms();
    let k = spec.max_lag();
    (k..y.len())
        .map(|i| terms.iter().map(|t| t.product(y, i)).collect())
        .collect()
}

/// Newey–West (Bartlett kernel) long-run covariance of demeaned rows.
pub fn newey_west(rows: &[Vec<f64>], lag: usize) -> DMatrix<f64> {
    let t = rows.len();
    let q = rows.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0; q];
    for r in rows {
        for a in 0..q {
            mean[a] += r[a];
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    let h = DMatrix::from_fn(t, q, |i, a| rows[i][a] - mean[a]);
    let gamma = |l: usize| -> DMatrix<f64> {
        let a = h.rows(l, t - l);
        let b = h.rows(0, t - l);
        a.transpose() * b / t as f64
    };
    let mut s = gamma(0);
    for l in 1..=lag.min(t.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let g = gamma(l);
        s += (&g + g.transpose()) * w;
    }
    s
}

fn inverse_weight(s: &DMatrix<f64>) -> DMatrix<f64> {
    match s.clone().cholesky() {
        Some(c) => c.inverse(),
        None => s
            .clone()
            .pseudo_inverse(1e-12)
            .unwrap_or_else(|_| DMatrix::identity(s.nrows(), s.ncols())),
    }
}

fn quad_form(d: &[f64], w: &DMatrix<f64>) -> f64 {
    let v = DVector::from_column_slice(d);
    (v.transpose() * w * &v)[(0, 0)].max(0.0).sqrt()
}

fn two_step<G: FnMut(f64) -> Vec<f64>>(
    observed: &[f64],
    y: &[f64],
    spec: &GmmSpec,
    mut g: G,
) -> GmmResult {
    let q = observed.len();
    let objective = |w: &DMatrix<f64>, g: &mut G| {
        let (b, v) = minimize_scalar(
            |b| {
                let d: Vec<f64> = observed.iter().zip(g(b)).map(|(m, gb)| m - gb).collect();
                quad_form(&d, w)
            },
            0.0,
            BETA_MAX,
            GRID,
            TOL,
        );
        GmmResult {
            beta: b,
            objective: v,
            at_bound: b <= 0.0 || b >= BETA_MAX,
        }
    };
    let first = objective(&DMatrix::identity(q, q), &mut g);
    if q == 1 || spec.weighting == Weighting::Identity {
        return first;
    }
    let s = newey_west(&moment_contributions(y, spec.moments), spec.moments.max_lag() + 2);
    objective(&inverse_weight(&s), &mut g)
}

fn observed_moments(series: &Ar1Series, spec: Ar1MomentSpec) -> Result<Vec<f64>> {
    let y = series.values();
    if y.len() <= spec.max_lag() + 1 {
        return Err(NneError::domain("series too short for the moment specification"));
    }
    Ok(spec.terms().iter().map(|t| t.sample_mean(y)).collect())
}

/// GMM with closed-form population moments. The single lag-1 moment is
/// inverted analytically.
pub fn gmm_ar1(series: &Ar1Series, spec: &GmmSpec) -> Result<GmmResult> {
    let m = observed_moments(series, spec.moments)?;
    if spec.moments == Ar1MomentSpec::Row1 {
        let beta = invert_lag1_moment(m[0]);
        let d = m[0] - MomentTerm::Cross(1).population(beta);
        return Ok(GmmResult {
            beta,
            objective: d.abs(),
            at_bound: beta <= 0.0 || beta >= BETA_MAX,
        });
    }
    Ok(two_step(&m, series.values(), spec, |b| spec.moments.population(b)))
}

/// Fixed shocks for `r` simulated series of length `n`, one substream each.
pub fn common_shocks(n: usize, r: usize, stream: &RngStream) -> Vec<Vec<f64>> {
    (0..r as u64)
        .map(|k| draw_shocks(n, &mut stream.substream(k).rng()))
        .collect()
}

/// Average of `stat` over the series generated by `shocks` at `beta`.
pub(crate) fn simulated_stat<F: Fn(&[f64]) -> f64>(beta: f64, shocks: &[Vec<f64>], stat: &F) -> f64 {
    let mut s = 0.0;
    for e in shocks {
        let y = series_from_shocks(beta, e).expect("beta kept in [0, 1)");
        s += stat(y.values());
    }
    s / shocks.len() as f64
}

/// Matches one observed statistic to its simulated average over `beta`.
pub(crate) fn match_scalar<F: Fn(&[f64]) -> f64>(observed: f64, shocks: &[Vec<f64>], stat: F) -> GmmResult {
    let (b, v) = minimize_scalar(
        |b| (observed - simulated_stat(b, shocks, &stat)).abs(),
        0.0,
        BETA_MAX,
        GRID,
        TOL,
    );
    GmmResult {
        beta: b,
        objective: v,
        at_bound: b <= 0.0 || b >= BETA_MAX,
    }
}

/// SMM with `r` simulated series held fixed across `beta` (common random numbers).
pub fn smm_ar1(series: &Ar1Series, spec: &GmmSpec, r: usize, stream: &RngStream) -> Result<GmmResult> {
    if r == 0 {
        return Err(NneError::domain("SMM needs at least one simulated series"));
    }
    let m = observed_moments(series, spec.moments)?;
    let shocks = common_shocks(series.len(), r, stream);
    if spec.moments == Ar1MomentSpec::Row1 {
        let term = MomentTerm::Cross(1);
        return Ok(match_scalar(m[0], &shocks, move |y| term.sample_mean(y)));
    }
    let terms = spec.moments.terms();
    Ok(two_step(&m, series.values(), spec, |b| {
        let mut acc = vec![0.0; terms.len()];
        for e in &shocks {
            let y = series_from_shocks(b, e).expect("beta kept in [0, 1)");
            for (a, t) in acc.iter_mut().zip(&terms) {
                *a += t.sample_mean(y.values());
            }
        }
        acc.iter().map(|a| a / shocks.len() as f64).collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar1::simulate_ar1;

    #[test]
    fn closed_form_inversion() {
        assert!((invert_lag1_moment(0.9375) - 0.6).abs() < 1e-12);
        assert_eq!(invert_lag1_moment(0.0), 0.0);
        assert_eq!(invert_lag1_moment(-0.3), 0.0);
        assert_eq!(invert_lag1_moment(1e6), BETA_MAX);
    }

    #[test]
    fn closed_form_matches_numerical_minimization() {
        for m in [0.05, 0.4, 0.9375, 2.5, 7.0] {
            let (b, _) = minimize_scalar(
                |b| (m - MomentTerm::Cross(1).population(b)).abs(),
                0.0,
                BETA_MAX,
                GRID,
                1e-14,
            );
            assert!((b - invert_lag1_moment(m)).abs() < 1e-8, "m={m}");
        }
    }

    #[test]
    fn hac_is_symmetric_psd() {
        for seed in 0..200 {
            let y = simulate_ar1(0.6, 100, &RngStream::new(seed)).unwrap();
            for spec in [Ar1MomentSpec::Row4, Ar1MomentSpec::Row6] {
                let s = newey_west(&moment_contributions(y.values(), spec), spec.max_lag() + 2);
                assert!((&s - s.transpose()).abs().max() < 1e-12);
                let eig = s.symmetric_eigenvalues();
                assert!(eig.min() > -1e-10 * eig.max(), "{eig}");
            }
        }
    }

    #[test]
    fn smm_converges_to_gmm_with_many_draws() {
        let y = simulate_ar1(0.6, 100, &RngStream::new(3)).unwrap();
        let spec = GmmSpec::two_step(Ar1MomentSpec::Row1);
        let g = gmm_ar1(&y, &spec).unwrap().beta;
        let s = smm_ar1(&y, &spec, 10_000, &RngStream::new(4)).unwrap().beta;
        assert!((g - s).abs() < 0.01, "{g} vs {s}");
        let again = smm_ar1(&y, &spec, 10_000, &RngStream::new(4)).unwrap().beta;
        assert_eq!(s, again);
    }

    #[test]
    fn multi_moment_gmm_recovers_beta_on_long_series() {
        let y = simulate_ar1(0.6, 20_000, &RngStream::new(8)).unwrap();
        for spec in [Ar1MomentSpec::Row3, Ar1MomentSpec::Row6] {
            let b = gmm_ar1(&y, &GmmSpec::two_step(spec)).unwrap().beta;
            assert!((b - 0.6).abs() < 0.02, "{spec:?}: {b}");
        }
    }
}

//! Polynomial regression with an L1 penalty, fitted by coordinate descent.
//!
//! Inputs are z-scored, expanded into every monomial of degree 1 to `degree`,
//! and the monomials are standardized again. Each output gets its own lasso
//! path over a geometric penalty grid; the penalty with the smallest
//! validation error is kept.

use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::params::TrainExample;
use crate::scalar::Real;

/// Index multisets (non-decreasing) of every monomial of degree `1..=degree` in `d` variables.
pub fn monomials(d: usize, degree: usize) -> Vec<Vec<usize>> {
    fn extend(d: usize, left: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for j in start..d {
            cur.push(j);
            extend(d, left - 1, j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for deg in 1..=degree {
        extend(d, deg, 0, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub degree: usize,
    /// Penalties to try; by default a 30-point geometric grid from the
    /// smallest penalty that zeroes every coefficient down to 1e-4 of it.
    pub penalties: Option<Vec<f64>>,
    pub validation_fraction: f64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            degree: 2,
            penalties: None,
            validation_fraction: 0.1,
            max_sweeps: 1000,
            tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoPoly<T> {
    degree: usize,
    terms: Vec<Vec<usize>>,
    in_mean: Vec<T>,
    in_sd: Vec<T>,
    feat_mean: Vec<T>,
    feat_sd: Vec<T>,
    /// Per output: intercept and coefficients on standardized features.
    intercept: Vec<T>,
    coef: Vec<Vec<T>>,
    /// Chosen penalty per output.
    pub penalty: Vec<f64>,
    pub validation_mse: Vec<f64>,
}

fn mean_sd<T: Real>(cols: &[Vec<T>]) -> (Vec<T>, Vec<T>) {
    cols.iter()
        .map(|c| {
            let n = T::c(c.len() as f64);
            let m = c.iter().copied().sum::<T>() / n;
            let v = c.iter().map(|x| (*x - m) * (*x - m)).sum::<T>() / n;
            let s = v.sqrt();
            (m, if s > T::c(1e-12) { s } else { T::one() })
        })
        .unzip()
}

fn soft(x: f64, a: f64) -> f64 {
    if x > a {
        x - a
    } else if x < -a {
        x + a
    } else {
        0.0
    }
}

/// Coordinate descent for `(2n)^-1 |y - X b|^2 + a |b|_1` on centred,
/// unit-variance columns, warm-started from `b`.
fn coordinate_descent<T: Real>(x: &[Vec<T>], y: &[T], a: f64, b: &mut [T], max_sweeps: usize, tol: f64) {
    let n = y.len();
    let nf = n as f64;
    let mut r: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();
    for (j, col) in x.iter().enumerate() {
        let bj = b[j].as_f64();
        if bj != 0.0 {
            for i in 0..n {
                r[i] -= col[i].as_f64() * bj;
            }
        }
    }
    let sq: Vec<f64> = x
        .iter()
        .map(|c| c.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / nf)
        .collect();
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        for (j, col) in x.iter().enumerate() {
            if sq[j] == 0.0 {
                continue;
            }
            let old = b[j].as_f64();
            let rho: f64 = col.iter().zip(&r).map(|(c, ri)| c.as_f64() * ri).sum::<f64>() / nf + sq[j] * old;
            let new = soft(rho, a) / sq[j];
            if new != old {
                let d = new - old;
                for i in 0..n {
                    r[i] -= col[i].as_f64() * d;
                }
                b[j] = T::c(new);
                max_change = max_change.max(d.abs() * sq[j].sqrt());
            }
        }
        if max_change < tol {
            break;
        }
    }
}

impl<T: Real> LassoPoly<T> {
    pub fn n_features(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn features(&self, m: &[f64]) -> Vec<T> {
        let z: Vec<T> = m
            .iter()
            .enumerate()
            .map(|(k, v)| (T::c(*v) - self.in_mean[k]) / self.in_sd[k])
            .collect();
        self.terms
            .iter()
            .enumerate()
            .map(|(f, t)| {
                let raw = t.iter().fold(T::one(), |acc, &k| acc * z[k]);
                (raw - self.feat_mean[f]) / self.feat_sd[f]
            })
            .collect()
    }

    /// Fits on the first part of `examples`, validating penalties on the rest.
    pub fn fit(examples: &[TrainExample], opts: &LassoOptions) -> Result<Self> {
        if !(1..=3).contains(&opts.degree) {
            return Err(NneError::Config(format!("polynomial degree {} not in 1..=3", opts.degree)));
        }
        if examples.len() < 4 {
            return Err(NneError::domain("lasso needs at least four examples"));
        }
        if !(opts.validation_fraction > 0.0 && opts.validation_fraction < 1.0) {
            return Err(NneError::Config("validation_fraction must lie in (0,1)".into()));
        }
        let d = examples[0].moments.len();
        let p = examples[0].theta.len();
        if let Some(e) = examples.iter().find(|e| e.moments.len() != d || e.theta.len() != p) {
            return Err(NneError::dimension("example", d, e.moments.len()));
        }
        let l = examples.len();
        let n_val = ((l as f64 * opts.validation_fraction).round() as usize).clamp(1, l - 2);
        let n_tr = l - n_val;
        let inputs: Vec<Vec<T>> = (0..d)
            .map(|k| examples[..n_tr].iter().map(|e| T::c(e.moments.values()[k])).collect())
            .collect();
        let (in_mean, in_sd) = mean_sd(&inputs);
        let terms = monomials(d, opts.degree);
        let mut model = Self {
            degree: opts.degree,
            terms,
            in_mean,
            in_sd,
            feat_mean: Vec::new(),
            feat_sd: Vec::new(),
            intercept: vec![T::zero(); p],
            coef: Vec::new(),
            penalty: Vec::new(),
            validation_mse: Vec::new(),
        };
        let nf = model.terms.len();
        model.feat_mean = vec![T::zero(); nf];
        model.feat_sd = vec![T::one(); nf];
        let raw_rows: Vec<Vec<T>> = examples.iter().map(|e| model.features(e.moments.values())).collect();
        let raw_cols: Vec<Vec<T>> = (0..nf).map(|f| raw_rows[..n_tr].iter().map(|r| r[f]).collect()).collect();
        let (fm, fs) = mean_sd(&raw_cols);
        let standardize = |rows: &[Vec<T>]| -> Vec<Vec<T>> {
            (0..nf)
                .map(|f| rows.iter().map(|r| (r[f] - fm[f]) / fs[f]).collect())
                .collect()
        };
        let x_tr = standardize(&raw_rows[..n_tr]);
        let x_val = standardize(&raw_rows[n_tr..]);
        model.feat_mean = fm;
        model.feat_sd = fs;

        for k in 0..p {
            let y: Vec<T> = examples[..n_tr].iter().map(|e| T::c(e.theta[k])).collect();
            let y_mean = y.iter().copied().sum::<T>() / T::c(n_tr as f64);
            let yc: Vec<T> = y.iter().map(|v| *v - y_mean).collect();
            let grid = match &opts.penalties {
                Some(g) => g.clone(),
                None => {
                    let a_max = x_tr
                        .iter()
                        .map(|c| {
                            (c.iter().zip(&yc).map(|(a, b)| a.as_f64() * b.as_f64()).sum::<f64>() / n_tr as f64)
                                .abs()
                        })
                        .fold(0.0, f64::max)
                        .max(1e-12);
                    (0..30).map(|i| a_max * 1e-4f64.powf(i as f64 / 29.0)).collect()
                }
            };
            let mut b = vec![T::zero(); nf];
            let mut best: Option<(f64, f64, Vec<T>)> = None;
            for &a in &grid {
                coordinate_descent(&x_tr, &yc, a, &mut b, opts.max_sweeps, opts.tol);
                let mse = examples[n_tr..]
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        let pred = y_mean.as_f64()
                            + (0..nf).map(|f| x_val[f][i].as_f64() * b[f].as_f64()).sum::<f64>();
                        (pred - e.theta[k]).powi(2)
                    })
                    .sum::<f64>()
                    / n_val as f64;
                if best.as_ref().is_none_or(|(m, _, _)| mse < *m) {
                    best = Some((mse, a, b.clone()));
                }
            }
            let (mse, a, b) = best.expect("nonempty penalty grid");
            model.intercept[k] = y_mean;
            model.coef.push(b);
            model.penalty.push(a);
            model.validation_mse.push(mse);
        }
        Ok(model)
    }

    pub fn predict(&self, m: &[f64]) -> Result<Vec<T>> {
        if m.len() != self.in_mean.len() {
            return Err(NneError::dimension("moment vector", self.in_mean.len(), m.len()));
        }
        let x = self.features(m);
        Ok(self
            .coef
            .iter()
            .zip(&self.intercept)
            .map(|(b, c)| *c + x.iter().zip(b).map(|(xi, bi)| *xi * *bi).sum::<T>())
            .collect())
    }
}

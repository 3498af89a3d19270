//! Log-density families used as training losses.
//!
//! A family turns the raw output layer into a distribution over the parameter
//! and scores a parameter draw by `-2 log density` (dropping constants). The
//! normal family comes in three covariance shapes: identity (mean squared
//! error), diagonal and full.

use super::{Accuracy, OutputHead, OutputScaling, Prediction};
use crate::scalar::Real;

/// Log-variances (and log squared Cholesky diagonals) are clamped to this interval.
pub const LOG_VARIANCE_CLAMP: f64 = 10.0;

pub trait DensityFamily<T: Real>: Send + Sync {
    /// Output head this family reads.
    fn head(&self) -> OutputHead;

    fn name(&self) -> &'static str;

    fn decode(&self, raw: &[T], scaling: &OutputScaling<T>, p: usize) -> Prediction<T>;

    /// `-2 log density` of `theta` up to an additive constant. When `grad` is
    /// given, the derivative with respect to each raw output is written to it.
    fn loss(&self, raw: &[T], scaling: &OutputScaling<T>, theta: &[T], grad: Option<&mut [T]>) -> T;
}

#[inline]
fn clamp_log_var<T: Real>(s: T) -> (T, bool) {
    let c = T::c(LOG_VARIANCE_CLAMP);
    if s < -c {
        (-c, false)
    } else if s > c {
        (c, false)
    } else {
        (s, true)
    }
}

#[inline]
fn mean<T: Real>(raw: &[T], scaling: &OutputScaling<T>, k: usize) -> T {
    scaling.shift[k] + scaling.scale[k] * raw[k]
}

/// Unit covariance: the loss is the squared error.
#[derive(Clone, Copy, Debug, Default)]
pub struct NormalIdentity;

impl<T: Real> DensityFamily<T> for NormalIdentity {
    fn head(&self) -> OutputHead {
        OutputHead::Point
    }

    fn name(&self) -> &'static str {
        "normal_identity"
    }

    fn decode(&self, raw: &[T], scaling: &OutputScaling<T>, p: usize) -> Prediction<T> {
        Prediction {
            mu: (0..p).map(|k| mean(raw, scaling, k)).collect(),
            accuracy: Accuracy::None,
        }
    }

    fn loss(&self, raw: &[T], scaling: &OutputScaling<T>, theta: &[T], mut grad: Option<&mut [T]>) -> T {
        let mut total = T::zero();
        for (k, &t) in theta.iter().enumerate() {
            let e = mean(raw, scaling, k) - t;
            total = total + e * e;
            if let Some(g) = grad.as_deref_mut() {
                g[k] = T::c(2.0) * e * scaling.scale[k];
            }
        }
        total
    }
}

/// Independent coordinates with their own variances.
#[derive(Clone, Copy, Debug, Default)]
pub struct NormalDiagonal;

impl<T: Real> DensityFamily<T> for NormalDiagonal {
    fn head(&self) -> OutputHead {
        OutputHead::DiagVar
    }

    fn name(&self) -> &'static str {
        "normal_diagonal"
    }

    fn decode(&self, raw: &[T], scaling: &OutputScaling<T>, p: usize) -> Prediction<T> {
        let two = T::c(2.0);
        Prediction {
            mu: (0..p).map(|k| mean(raw, scaling, k)).collect(),
            accuracy: Accuracy::Diagonal(
                (0..p)
                    .map(|k| clamp_log_var(raw[p + k] + two * scaling.scale[k].ln()).0.exp())
                    .collect(),
            ),
        }
    }

    fn loss(&self, raw: &[T], scaling: &OutputScaling<T>, theta: &[T], mut grad: Option<&mut [T]>) -> T {
        let p = theta.len();
        let two = T::c(2.0);
        let mut total = T::zero();
        for (k, &t) in theta.iter().enumerate() {
            let d = t - mean(raw, scaling, k);
            let (s, free) = clamp_log_var(raw[p + k] + two * scaling.scale[k].ln());
            let prec = (-s).exp();
            let q = d * d * prec;
            total = total + s + q;
            if let Some(g) = grad.as_deref_mut() {
                g[k] = -two * d * prec * scaling.scale[k];
                g[p + k] = if free { T::one() - q } else { T::zero() };
            }
        }
        total
    }
}

/// Full covariance `V = T T'` with `T` lower triangular. Raw outputs after
/// the mean hold the rows of `T`'s lower triangle in order.
#[derive(Clone, Copy, Debug, Default)]
pub struct NormalFull;

#[inline]
fn tri(k: usize, l: usize) -> usize {
    k * (k + 1) / 2 + l
}

impl NormalFull {
    /// Cholesky factor (row-major, `p x p`) and whether each diagonal sits inside the clamp.
    fn factor<T: Real>(raw: &[T], scaling: &OutputScaling<T>, p: usize) -> (Vec<T>, Vec<bool>) {
        let two = T::c(2.0);
        let mut t = vec![T::zero(); p * p];
        let mut free = vec![true; p];
        for k in 0..p {
            for l in 0..k {
                t[k * p + l] = scaling.scale[k] * raw[p + tri(k, l)];
            }
            let (a, f) = clamp_log_var(raw[p + tri(k, k)] + two * scaling.scale[k].ln());
            t[k * p + k] = (a / two).exp();
            free[k] = f;
        }
        (t, free)
    }
}

impl<T: Real> DensityFamily<T> for NormalFull {
    fn head(&self) -> OutputHead {
        OutputHead::FullCov
    }

    fn name(&self) -> &'static str {
        "normal_full"
    }

    fn decode(&self, raw: &[T], scaling: &OutputScaling<T>, p: usize) -> Prediction<T> {
        let (t, _) = Self::factor(raw, scaling, p);
        let mut v = vec![T::zero(); p * p];
        for i in 0..p {
            for j in 0..=i {
                let mut acc = T::zero();
                for l in 0..=j {
                    acc = acc + t[i * p + l] * t[j * p + l];
                }
                v[i * p + j] = acc;
                v[j * p + i] = acc;
            }
        }
        Prediction {
            mu: (0..p).map(|k| mean(raw, scaling, k)).collect(),
            accuracy: Accuracy::Full(v),
        }
    }

    fn loss(&self, raw: &[T], scaling: &OutputScaling<T>, theta: &[T], grad: Option<&mut [T]>) -> T {
        let p = theta.len();
        let two = T::c(2.0);
        let (t, free) = Self::factor(raw, scaling, p);
        // T w = d, then a = T^-T w = V^-1 d.
        let mut w = vec![T::zero(); p];
        for k in 0..p {
            let mut acc = theta[k] - mean(raw, scaling, k);
            for l in 0..k {
                acc = acc - t[k * p + l] * w[l];
            }
            w[k] = acc / t[k * p + k];
        }
        let mut total = T::zero();
        for k in 0..p {
            total = total + two * t[k * p + k].ln() + w[k] * w[k];
        }
        let Some(g) = grad else {
            return total;
        };
        let mut a = vec![T::zero(); p];
        for k in (0..p).rev() {
            let mut acc = w[k];
            for l in k + 1..p {
                acc = acc - t[l * p + k] * a[l];
            }
            a[k] = acc / t[k * p + k];
        }
        for k in 0..p {
            g[k] = -two * a[k] * scaling.scale[k];
            for l in 0..k {
                g[p + tri(k, l)] = -two * a[k] * w[l] * scaling.scale[k];
            }
            g[p + tri(k, k)] = if free[k] {
                T::one() - a[k] * w[k] * t[k * p + k]
            } else {
                T::zero()
            };
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(p: usize) -> OutputScaling<f64> {
        OutputScaling::identity(p)
    }

    #[test]
    fn identity_loss_values() {
        assert_eq!(NormalIdentity.loss(&[1.5], &unit(1), &[1.0], None), 0.25);
        assert_eq!(NormalIdentity.loss(&[1.0, -2.0], &unit(2), &[1.0, -2.0], None), 0.0);
    }

    #[test]
    fn diagonal_loss_values() {
        assert_eq!(NormalDiagonal.loss(&[0.3, 0.0], &unit(1), &[0.3], None), 0.0);
        assert_eq!(NormalDiagonal.loss(&[1.0, 0.0], &unit(1), &[0.0], None), 1.0);
        assert_relative_eq!(NormalDiagonal.loss(&[0.0, 1.0], &unit(1), &[0.0], None), 1.0);
    }

    #[test]
    fn full_with_identity_factor_matches_diagonal() {
        let raw = [0.2, -0.1, 0.0, 0.0, 0.0];
        let theta = [1.0, 0.5];
        let full = NormalFull.loss(&raw, &unit(2), &theta, None);
        let diag = NormalDiagonal.loss(&[0.2, -0.1, 0.0, 0.0], &unit(2), &theta, None);
        assert_relative_eq!(full, diag, epsilon = 1e-14);
    }

    #[test]
    fn full_loss_matches_dense_formula() {
        let raw: [f64; 5] = [0.1, -0.3, 0.4, 0.7, -0.2];
        let scaling = OutputScaling {
            shift: vec![1.0, -1.0],
            scale: vec![2.0, 0.5],
        };
        let theta = [0.4, -1.6];
        let pred = NormalFull.decode(&raw, &scaling, 2);
        let Accuracy::Full(v) = pred.accuracy else { unreachable!() };
        let det = v[0] * v[3] - v[1] * v[2];
        let d = [theta[0] - pred.mu[0], theta[1] - pred.mu[1]];
        let q = (v[3] * d[0] * d[0] - 2.0 * v[1] * d[0] * d[1] + v[0] * d[1] * d[1]) / det;
        assert_relative_eq!(NormalFull.loss(&raw, &scaling, &theta, None), det.ln() + q, epsilon = 1e-12);
    }

    #[test]
    fn clamped_log_variance_has_flat_gradient() {
        let mut g = [0.0; 2];
        let l = NormalDiagonal.loss(&[0.0, 25.0], &unit(1), &[1.0], Some(&mut g));
        assert_relative_eq!(l, 10.0 + (-10.0_f64).exp());
        assert_eq!(g[1], 0.0);
    }
}

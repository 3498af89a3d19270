//! Nelder–Mead simplex minimization.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMead<T> {
    /// Maximum objective evaluations.
    pub max_evals: usize,
    /// Stop when the spread of objective values across the simplex falls below this...
    pub f_tol: T,
    /// ...and every vertex is within this distance (per coordinate) of the best one.
    pub x_tol: T,
}

impl<T: Real> Default for NelderMead<T> {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: T::c(1e-8),
            x_tol: T::c(1e-6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexResult<T> {
    pub x: Vec<T>,
    pub f: T,
    pub evals: usize,
    pub converged: bool,
}

impl<T: Real> NelderMead<T> {
    pub fn with_budget(max_evals: usize) -> Self {
        Self {
            max_evals,
            ..Self::default()
        }
    }

    /// Minimizes `f` from `x0`, with the initial simplex stepping `step[k]`
    /// along coordinate `k`. Non-finite objective values count as `+inf`.
    pub fn minimize<F: FnMut(&[T]) -> T>(&self, mut f: F, x0: &[T], step: &[T]) -> SimplexResult<T> {
        let n = x0.len();
        assert_eq!(step.len(), n, "one initial step per coordinate");
        let mut evals = 0usize;
        let mut eval = |x: &[T], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                T::infinity()
            }
        };
        let (alpha, gamma, rho, sigma) = (T::one(), T::c(2.0), T::c(0.5), T::c(0.5));

        let mut pts: Vec<Vec<T>> = Vec::with_capacity(n + 1);
        pts.push(x0.to_vec());
        for k in 0..n {
            let mut p = x0.to_vec();
            p[k] = p[k] + step[k];
            pts.push(p);
        }
        let mut vals: Vec<T> = pts.iter().map(|p| eval(p, &mut evals)).collect();

        let mut converged = false;
        while evals < self.max_evals {
            // sort vertices by value; stable so ties keep insertion order
            let mut idx: Vec<usize> = (0..=n).collect();
            idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
            pts = idx.iter().map(|&i| pts[i].clone()).collect();
            vals = idx.iter().map(|&i| vals[i]).collect();

            let spread = vals[n] - vals[0];
            let diameter = pts[1..]
                .iter()
                .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (*a - *b).abs()))
                .fold(T::zero(), T::max);
            if spread.is_finite() && spread <= self.f_tol && diameter <= self.x_tol {
                converged = true;
                break;
            }

            let mut centroid = vec![T::zero(); n];
            for p in &pts[..n] {
                for k in 0..n {
                    centroid[k] = centroid[k] + p[k];
                }
            }
            let nn = T::c(n as f64);
            centroid.iter_mut().for_each(|c| *c = *c / nn);
            let along = |t: T| -> Vec<T> {
                (0..n).map(|k| centroid[k] + t * (pts[n][k] - centroid[k])).collect()
            };

            let xr = along(-alpha);
            let fr = eval(&xr, &mut evals);
            if fr < vals[0] {
                let xe = along(-gamma);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    pts[n] = xe;
                    vals[n] = fe;
                } else {
                    pts[n] = xr;
                    vals[n] = fr;
                }
                continue;
            }
            if fr < vals[n - 1] {
                pts[n] = xr;
                vals[n] = fr;
                continue;
            }
            // contraction, outside if the reflection improved on the worst point
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
                continue;
            }
            // shrink toward the best vertex
            for i in 1..=n {
                for k in 0..n {
                    pts[i][k] = pts[0][k] + sigma * (pts[i][k] - pts[0][k]);
                }
                vals[i] = eval(&pts[i], &mut evals);
            }
        }
        let best = (0..=n)
            .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        SimplexResult {
            x: pts[best].clone(),
            f: vals[best],
            evals,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead::<f64> {
            max_evals: 5000,
            f_tol: 1e-14,
            x_tol: 1e-8,
        };
        let r = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn quadratic_in_five_dimensions_f32() {
        let nm = NelderMead::<f32>::default();
        let r = nm.minimize(
            |x| x.iter().enumerate().map(|(k, v)| (k as f32 + 1.0) * (v - k as f32).powi(2)).sum(),
            &[0.0; 5],
            &[1.0; 5],
        );
        for (k, v) in r.x.iter().enumerate() {
            assert!((v - k as f32).abs() < 1e-2, "{:?}", r.x);
        }
    }

    #[test]
    fn budget_is_respected_and_nan_is_avoided() {
        let r = NelderMead::<f64>::with_budget(30).minimize(
            |x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 3.0).powi(2) },
            &[1.0],
            &[1.0],
        );
        assert!(r.evals <= 32);
        assert!(r.f.is_finite());
        assert!(!r.converged);
    }
}

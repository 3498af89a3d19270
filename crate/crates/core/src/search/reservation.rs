use crate::error::{NneError, Result};
use crate::scalar::{normal_cdf, normal_pdf, Real};

use super::SearchParams;

const TOLERANCE: f64 = 1e-10;
const MAX_ITER: usize = 300;

/// Expected gain `E[max(eps - t, 0)]` for `eps ~ N(0, 1)`.
#[inline]
fn expected_gain<T: Real>(t: T) -> T {
    normal_pdf(t) - t * normal_cdf(-t)
}

/// `z - v` for a reservation utility `z`; it does not depend on `v`.
///
/// Solves `c = phi(t) - t (1 - Phi(t))` for `t` by bracketed bisection.
pub fn reservation_offset<T: Real>(c: T) -> Result<T> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(NneError::domain(format!("search cost must be positive and finite, got {c}")));
    }
    // expected_gain(t) >= -t, so t = -c - 1 is a lower bracket
    let mut lo = -c - T::one();
    let mut hi = T::one();
    while expected_gain(hi) > c {
        lo = hi;
        hi = hi + hi;
        if hi > T::c(40.0) {
            // gain underflows past here; cost is below anything representable
            return Ok(T::c(40.0));
        }
    }
    let tol = T::c(TOLERANCE).max(T::epsilon() * T::c(8.0) * (lo.abs().max(hi.abs())));
    for _ in 0..MAX_ITER {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) / T::c(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if expected_gain(mid) > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo + (hi - lo) / T::c(2.0))
}

/// Reservation utility `z` of an option with mean utility `v` and search cost `c`.
pub fn reservation_utility<T: Real>(v: T, c: T) -> Result<T> {
    Ok(v + reservation_offset(c)?)
}

/// Reservation offsets by page rank for one parameter value. Costs depend on
/// the option only through its rank, so one solve per rank suffices.
#[derive(Clone, Debug)]
pub struct ReservationTable {
    offsets: Vec<f64>,
}

impl ReservationTable {
    pub fn new(params: &SearchParams, max_rank: usize) -> Result<Self> {
        let offsets = (1..=max_rank as u32)
            .map(|r| reservation_offset(params.search_cost(r)))
            .collect::<Result<_>>()?;
        Ok(Self { offsets })
    }

    #[inline]
    pub fn offset(&self, rank: u32) -> f64 {
        self.offsets[rank as usize - 1]
    }

    pub fn max_rank(&self) -> usize {
        self.offsets.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// `E[max(eps - t, 0)]` by trapezoidal quadrature, independent of the closed form.
    fn gain_by_quadrature(t: f64) -> f64 {
        let hi = t.max(0.0) + 12.0;
        let steps = 200_000;
        let h = (hi - t) / steps as f64;
        let f = |e: f64| (e - t) * (-(e * e) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = 0.5 * (f(t) + f(hi));
        for k in 1..steps {
            s += f(t + k as f64 * h);
        }
        s * h
    }

    fn bisect_oracle(c: f64) -> f64 {
        let (mut lo, mut hi) = (-c - 5.0, 10.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if gain_by_quadrature(mid) > c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn free_gain_at_zero() {
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(reservation_utility(0.0, c).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(reservation_utility(2.0, c).unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn large_cost_approaches_v_minus_c() {
        let z = reservation_utility(0.0, 10.0).unwrap();
        assert_abs_diff_eq!(z, bisect_oracle(10.0), epsilon = 1e-6);
        assert_abs_diff_eq!(z, -10.0, epsilon = 1e-6);
    }

    #[test]
    fn matches_quadrature_oracle_over_cost_range() {
        for &c in &[0.003, 0.02, 0.1, 0.3, 1.0, 3.0] {
            let t = reservation_offset(c).unwrap();
            assert_abs_diff_eq!(t, bisect_oracle(c), epsilon = 1e-6);
            assert_abs_diff_eq!(expected_gain(t), c, epsilon = 1e-10);
        }
    }

    #[test]
    fn tiny_costs_stay_finite() {
        let t = reservation_offset((-30.0f64).exp()).unwrap();
        assert!(t.is_finite() && t > 5.0);
        assert!(reservation_offset(1e-320_f64).unwrap() <= 40.0);
    }

    #[test]
    fn monotone_and_shift_equivariant_on_grid() {
        let vs: Vec<f64> = (0..20).map(|i| -3.0 + 0.3 * i as f64).collect();
        let cs: Vec<f64> = (0..20).map(|i| 0.002 * 1.4f64.powi(i)).collect();
        for &c in &cs {
            let base = reservation_utility(0.0, c).unwrap();
            let mut prev_v = f64::NEG_INFINITY;
            for &v in &vs {
                let z = reservation_utility(v, c).unwrap();
                assert_abs_diff_eq!(z - v, base, epsilon = 1e-8);
                assert!(z > prev_v);
                prev_v = z;
            }
        }
        for &v in &vs {
            let mut prev = f64::INFINITY;
            for &c in &cs {
                let z = reservation_utility(v, c).unwrap();
                assert!(z < prev);
                prev = z;
            }
        }
    }

    #[test]
    fn nonpositive_cost_is_domain_error() {
        assert!(reservation_offset(0.0_f64).is_err());
        assert!(reservation_offset(-1.0_f64).is_err());
        assert!(reservation_offset(f64::NAN).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let t = reservation_offset(0.1_f32).unwrap();
        assert!((t as f64 - reservation_offset(0.1_f64).unwrap()).abs() < 1e-5);
    }
}

//! Scalar abstraction shared by the numerical kernels.
//!
//! The shallow net, the reservation-utility solver, the simplex optimizer and
//! the lasso learner are written against [`Real`], so they run in either `f32`
//! or `f64`. Simulation and moment code works in `f64` and converts at the
//! boundary.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the generic kernels: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` constant.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn type_name() -> &'static str;
}

impl Real for f32 {
    fn type_name() -> &'static str {
        "f32"
    }
}

impl Real for f64 {
    fn type_name() -> &'static str {
        "f64"
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf<T: Real>(x: T) -> T {
    T::c(INV_SQRT_2PI) * (-(x * x) / T::c(2.0)).exp()
}

/// Standard normal distribution function, accurate to double precision in both tails.
#[inline]
pub fn normal_cdf<T: Real>(x: T) -> T {
    let x = x.as_f64();
    T::c(0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2))
}

/// Logistic function `1 / (1 + exp(-x))`, evaluated without overflow.
#[inline]
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

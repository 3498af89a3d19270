//! Parameter spaces, parameter points, moment vectors and training examples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NneError, Result};
use crate::rng::RngStream;

/// Box-constrained parameter space with named, ordered coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(NneError::domain("parameter space needs at least one coordinate"));
        }
        if lower.len() != names.len() {
            return Err(NneError::dimension("lower bounds", names.len(), lower.len()));
        }
        if upper.len() != names.len() {
            return Err(NneError::dimension("upper bounds", names.len(), upper.len()));
        }
        for (k, name) in names.iter().enumerate() {
            if names[..k].contains(name) {
                return Err(NneError::domain(format!("duplicate parameter name {name:?}")));
            }
            let (lo, hi) = (lower[k], upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(NneError::domain(format!(
                    "parameter {name:?}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            names,
            lower,
            upper,
        })
    }

    /// Builds a space from `(name, lower, upper)` triples.
    pub fn from_bounds<S: Into<String>>(bounds: impl IntoIterator<Item = (S, f64, f64)>) -> Result<Self> {
        let mut names = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for (n, lo, hi) in bounds {
            names.push(n.into());
            lower.push(lo);
            upper.push(hi);
        }
        Self::new(names, lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn center(&self) -> ParamVector {
        ParamVector::new(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
        )
    }

    /// Closed-box membership.
    pub fn contains(&self, theta: &ParamVector) -> bool {
        theta.len() == self.dim()
            && theta
                .values()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Copy of this space with coordinate `name` given new bounds.
    pub fn with_bounds(&self, name: &str, lower: f64, upper: f64) -> Result<Self> {
        let k = self
            .index_of(name)
            .ok_or_else(|| NneError::domain(format!("unknown parameter {name:?}")))?;
        let mut lo = self.lower.clone();
        let mut hi = self.upper.clone();
        lo[k] = lower;
        hi[k] = upper;
        Self::new(self.names.clone(), lo, hi)
    }

    /// Draws each coordinate independently and uniformly on its interval.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        ParamVector::new(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
        )
    }
}

/// Uniform draw from `space` using the first values of `stream`.
pub fn sample_theta(space: &ParamSpace, stream: &RngStream) -> ParamVector {
    space.sample_with(&mut stream.rng())
}

/// A point in a [`ParamSpace`], in the space's coordinate order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn try_new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(NneError::domain(format!("parameter {k} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// Fixed-order summary statistics of one dataset, tagged with the
/// specification that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    spec_id: String,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn new(spec_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            spec_id: spec_id.into(),
            values,
        }
    }

    pub fn spec_id(&self) -> &str {
        &self.spec_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One `(theta, moments)` pair simulated under `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub theta: ParamVector,
    pub moments: MomentVector,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn search_space() -> ParamSpace {
        let mut b: Vec<(String, f64, f64)> =
            (1..=6).map(|k| (format!("beta{k}"), -0.5, 0.5)).collect();
        b.push(("eta".into(), 2.0, 5.0));
        b.push(("delta0".into(), -5.0, -2.0));
        b.push(("delta1".into(), -0.25, 0.25));
        ParamSpace::from_bounds(b).unwrap()
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(ParamSpace::from_bounds([("a", 1.0, 1.0)]).is_err());
        assert!(ParamSpace::from_bounds([("a", 0.0, 1.0), ("a", 0.0, 1.0)]).is_err());
        assert!(ParamSpace::new(vec!["a".into()], vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(ParamSpace::from_bounds([("a", f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn unit_box_draw_stays_inside() {
        let s = ParamSpace::from_bounds([("beta", 0.0, 0.9)]).unwrap();
        for i in 0..1000 {
            let t = sample_theta(&s, &RngStream::new(3).substream(i));
            assert!((0.0..=0.9).contains(&t[0]));
        }
    }

    #[test]
    fn uniform_mean_law_of_large_numbers() {
        let s = ParamSpace::from_bounds([("x", 2.0, 5.0)]).unwrap();
        let mut rng = RngStream::new(11).rng();
        let n = 1_000_000;
        let mean = (0..n).map(|_| s.sample_with(&mut rng)[0]).sum::<f64>() / n as f64;
        // se = 3/sqrt(12 n) ~ 8.7e-4
        assert!((mean - 3.5).abs() < 0.01, "mean {mean}");
        assert!((mean - 3.5).abs() < 3.0 * 3.0 / (12.0 * n as f64).sqrt());
    }

    #[test]
    fn search_space_draw_is_nine_dimensional() {
        let s = search_space();
        let t = sample_theta(&s, &RngStream::new(1));
        assert_eq!(t.len(), 9);
        assert!(s.contains(&t));
        assert_eq!(s.center()[6], 3.5);
        assert_eq!(s.center()[7], -3.5);
    }

    #[test]
    fn with_bounds_replaces_one_coordinate() {
        let s = search_space().with_bounds("delta0", -3.0, -2.0).unwrap();
        assert_eq!(s.lower()[7], -3.0);
        assert!(search_space().with_bounds("nope", 0.0, 1.0).is_err());
    }
}

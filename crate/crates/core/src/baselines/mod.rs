//! Classical estimators used as benchmarks.

pub mod gmm;
pub mod indirect;
pub mod lasso;
pub mod scalar_min;
pub mod simplex;
pub mod smle;

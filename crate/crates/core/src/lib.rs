//! Simulation-based structural estimation with a neural net estimator.
//!
//! A structural model is simulated at parameter values drawn uniformly from a
//! box; a shallow net is trained to map each simulated dataset's moments back
//! to the parameters that generated it; the trained net is then applied to the
//! observed moments. Trained with a Gaussian log-likelihood head, the net also
//! reports the spread of the parameter given the moments.
//!
//! Models: an AR(1) process ([`ar1`]), a Weitzman sequential-search model
//! ([`search`]) and a conjugate normal-mean toy used as a posterior oracle.
//! Classical competitors live in [`baselines`].
//!
//! The numerical kernels are generic over [`Real`]; the aliases below fix the
//! scalar to `f64` (or `f32`) for everyday use.

pub mod ar1;
pub mod baselines;
pub mod error;
pub mod estimator;
pub mod net;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod search;

pub use error::{NneError, Result};
pub use params::{sample_theta, MomentVector, ParamSpace, ParamVector, TrainExample};
pub use rng::RngStream;
pub use scalar::Real;

/// Shallow net in double precision.
pub type ShallowNet = net::ShallowNet<f64>;
/// Shallow net in single precision.
pub type ShallowNetF32 = net::ShallowNet<f32>;
/// Trained net with metadata, double precision.
pub type TrainedNet = net::TrainedNet<f64>;
/// Trained net with metadata, single precision.
pub type TrainedNetF32 = net::TrainedNet<f32>;
/// Simplex optimizer in double precision.
pub type NelderMead = baselines::simplex::NelderMead<f64>;
/// Lasso polynomial model in double precision.
pub type LassoPoly = baselines::lasso::LassoPoly<f64>;

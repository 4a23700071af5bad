//! Multiple multivariate density-density regression (MDDR).
//!
//! Fits a distribution-valued response as a sliced Wasserstein barycenter of
//! push-forwarded distribution-valued predictors. Regression maps and
//! barycenter weights are inferred under a generalized (loss-based) posterior
//! sampled with the Metropolis-adjusted Langevin algorithm.
//!
//! The crate is organized bottom-up:
//!
//! - [`sliced_ot`]: exact 1-D optimal transport and the Monte Carlo sliced
//!   Wasserstein distance with analytic support-point gradients.
//! - [`swb`]: free-support sliced Wasserstein barycenter solver (Adam updates)
//!   with optional forward-mode Jacobians of the barycenter atoms with respect
//!   to the regression parameters and the barycenter weights.
//! - [`model`]: linear push-forwards, the generalized likelihood, priors, and
//!   the simplex reparameterization of the weights.
//! - [`mcmc`]: MALA sampling of the generalized posterior and chain summaries.
//! - [`experiments`]: synthetic data generators, the single-predictor
//!   baseline, evaluation metrics, and the communication-graph builder.

pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod mcmc;
pub mod model;
pub mod reference;
pub mod rng;
pub mod sliced_ot;
pub mod swb;

pub use error::{MddrError, Result};
pub use sliced_ot::{EmpiricalDistribution, ProjectionSet};

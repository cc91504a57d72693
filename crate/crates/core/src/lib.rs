//! Bayesian hierarchical data fusion of ordinal manual annotations and
//! compositional AI confidences.
//!
//! A latent ordinal score per sequence follows a probit regression on
//! covariates. Manual annotations are probit-ordinal given the latent score,
//! and AI confidence vectors are Dirichlet with a category-specific mean and
//! an image-level precision. Inference is by MCMC: exact Gibbs draws of the
//! latent scores and adaptive random-walk Metropolis–Hastings for everything
//! else.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod mcmc;
pub mod model;
pub mod priors;
pub mod run;
pub mod sampling;
pub mod simulator;
pub mod special;

pub use error::{FusionError, Result};

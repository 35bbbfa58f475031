//! Models fitted to the latent space: PCA, Gaussian mixtures and one-vs-rest
//! linear max-margin classifiers, plus the per-item membership table the
//! clustered samplers consume.

mod gmm;
mod margin;
mod membership;
mod pca;

pub use gmm::{gmm_fit, CovarianceMode, Covariances, GmmModel};
pub use margin::{margin_fit, MarginModel, PlattParams};
pub use membership::{likelihood_ratio, memberships, MembershipTable, PosteriorModel};
pub use pca::{pca_fit, PcaModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("class {class} has {count} items; at least 2 are required")]
    ClassTooSmall { class: usize, count: usize },
    #[error("non-finite log-likelihood at EM iteration {iteration}")]
    NonFiniteLikelihood { iteration: usize },
    #[error("model expects {expected}-dimensional input, latent space has {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Fitting hyperparameters. Defaults are the harness' fixed settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    /// Max-margin regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    /// Stop EM once the objective improves by less than this.
    pub em_tolerance: f64,
    pub em_max_iterations: usize,
    /// Added to covariance diagonals (full) or variances (spherical) each M-step.
    pub covariance_regularization: f64,
    pub platt_max_iterations: usize,
    pub platt_tolerance: f64,
    /// Upper bound on reported likelihood ratios.
    pub ratio_cap: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 50,
            em_tolerance: 1e-6,
            em_max_iterations: 200,
            covariance_regularization: 1e-6,
            platt_max_iterations: 100,
            platt_tolerance: 1e-8,
            ratio_cap: 1e12,
            execution: Execution::Parallel,
        }
    }
}

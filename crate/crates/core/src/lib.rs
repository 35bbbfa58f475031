//! Boundary-aware data sampling for deep-learning model diagnosis.
//!
//! A run's activations, labels and latent space are loaded from disk
//! ([`artifact`]), latent models are fitted ([`latent`]), samples are drawn by
//! one of several strategies ([`samplers`]) and diagnosis query sets are
//! scored on the sample against the full data ([`query`]). [`synth`] produces
//! fully ground-truthed runs and [`sweep`] drives parameter sweeps.

pub mod artifact;
pub mod latent;
mod linalg;
pub mod par;
pub mod query;
pub mod samplers;
pub mod sweep;
pub mod synth;

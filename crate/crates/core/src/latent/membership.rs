use serde::{Deserialize, Serialize};

use super::gmm::{log_sum_exp, GmmModel};
use super::margin::MarginModel;
use super::{LatentConfig, ModelError};
use crate::artifact::LatentSpace;
use crate::par;

/// Per-item cluster posteriors, argmax assignment and posterior odds of the
/// assigned cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipTable {
    pub clusters: usize,
    /// Row-major `items x clusters`.
    pub posterior: Vec<f64>,
    pub assignment: Vec<usize>,
    pub likelihood_ratio: Vec<f64>,
}

impl MembershipTable {
    pub fn items(&self) -> usize {
        self.assignment.len()
    }

    pub fn posterior_row(&self, i: usize) -> &[f64] {
        &self.posterior[i * self.clusters..(i + 1) * self.clusters]
    }

    pub fn assigned_posterior(&self, i: usize) -> f64 {
        self.posterior_row(i)[self.assignment[i]]
    }

    /// Builds the table from posterior rows (each summing to 1).
    pub fn from_posteriors(clusters: usize, posterior: Vec<f64>, cap: f64) -> Self {
        assert!(clusters > 0 && posterior.len().is_multiple_of(clusters));
        let n = posterior.len() / clusters;
        let mut assignment = Vec::with_capacity(n);
        let mut likelihood_ratio = Vec::with_capacity(n);
        for row in posterior.chunks_exact(clusters) {
            let a = argmax_lowest(row);
            assignment.push(a);
            likelihood_ratio.push(likelihood_ratio_of(row[a], cap));
        }
        Self {
            clusters,
            posterior,
            assignment,
            likelihood_ratio,
        }
    }

    /// Item ids per cluster.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.clusters];
        for (i, &a) in self.assignment.iter().enumerate() {
            groups[a].push(i);
        }
        groups
    }
}

fn argmax_lowest(row: &[f64]) -> usize {
    (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
}

/// `p / (1 - p)`, capped at `cap` once `p >= 1 - 1e-12`.
pub fn likelihood_ratio(p: f64, cap: f64) -> f64 {
    likelihood_ratio_of(p, cap)
}

fn likelihood_ratio_of(p: f64, cap: f64) -> f64 {
    if p >= 1.0 - 1e-12 {
        cap
    } else {
        (p.max(0.0) / (1.0 - p)).min(cap)
    }
}

/// A fitted latent-space model that yields normalized cluster posteriors.
pub trait PosteriorModel {
    fn dims(&self) -> usize;
    fn clusters(&self) -> usize;
    /// Row-major posteriors for every latent row.
    fn posteriors(&self, latent: &LatentSpace, cfg: &LatentConfig) -> Result<Vec<f64>, ModelError>;
}

impl PosteriorModel for GmmModel {
    fn dims(&self) -> usize {
        GmmModel::dims(self)
    }

    fn clusters(&self) -> usize {
        self.components()
    }

    fn posteriors(&self, latent: &LatentSpace, cfg: &LatentConfig) -> Result<Vec<f64>, ModelError> {
        let densities = self.densities()?;
        let rows = par::map_range(cfg.execution, latent.rows(), |i| {
            let mut scratch = Vec::new();
            let logs = self.weighted_log_densities(&densities, latent.row(i), &mut scratch);
            let lse = log_sum_exp(&logs);
            logs.iter().map(|l| (l - lse).exp()).collect::<Vec<f64>>()
        });
        Ok(rows.into_iter().flatten().collect())
    }
}

impl PosteriorModel for MarginModel {
    fn dims(&self) -> usize {
        MarginModel::dims(self)
    }

    fn clusters(&self) -> usize {
        self.classes()
    }

    fn posteriors(&self, latent: &LatentSpace, cfg: &LatentConfig) -> Result<Vec<f64>, ModelError> {
        let rows = par::map_range(cfg.execution, latent.rows(), |i| {
            let x = latent.row(i);
            let probs: Vec<f64> = (0..self.classes())
                .map(|c| self.platt[c].probability(self.decision(c, x)))
                .collect();
            let total: f64 = probs.iter().sum();
            probs.into_iter().map(|p| p / total).collect::<Vec<f64>>()
        });
        Ok(rows.into_iter().flatten().collect())
    }
}

pub fn memberships<M: PosteriorModel + ?Sized>(
    model: &M,
    latent: &LatentSpace,
    cfg: &LatentConfig,
) -> Result<MembershipTable, ModelError> {
    if model.dims() != latent.dims() {
        return Err(ModelError::DimensionMismatch {
            expected: model.dims(),
            found: latent.dims(),
        });
    }
    let posterior = model.posteriors(latent, cfg)?;
    Ok(MembershipTable::from_posteriors(
        model.clusters(),
        posterior,
        cfg.ratio_cap,
    ))
}

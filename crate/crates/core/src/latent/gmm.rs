//! Gaussian mixture fitted by EM with k-means++ seeding.
//!
//! Each M-step adds `covariance_regularization` to the covariance diagonal
//! (full) or to the variance (spherical). That update is the exact maximizer
//! of the expected complete-data log-likelihood with a `-(eps / 2) tr(S^-1)`
//! term per item and component, so the tracked objective includes that term
//! and is non-decreasing across iterations.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LatentConfig, ModelError};
use crate::artifact::{squared_distance, LatentSpace};
use crate::linalg;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    Full,
    Spherical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariances {
    /// One `d x d` matrix per component.
    Full(Vec<Vec<Vec<f64>>>),
    /// One variance per component.
    Spherical(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub mode: CovarianceMode,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Covariances,
    /// Objective after each E-step, starting from the seeded parameters.
    pub log_likelihood_trace: Vec<f64>,
    /// Trace indices whose preceding M-step re-seeded an empty component.
    pub reseed_iterations: Vec<usize>,
    pub converged: bool,
}

/// Per-component quantities for density evaluation.
pub(crate) struct ComponentDensity {
    mean: Vec<f64>,
    /// Cholesky factor (full) or the variance (spherical).
    factor: Factor,
    log_norm: f64,
    trace_inverse: f64,
}

enum Factor {
    Full(Vec<f64>),
    Spherical(f64),
}

impl ComponentDensity {
    fn log_density(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let maha = match &self.factor {
            Factor::Full(l) => {
                let d = self.mean.len();
                scratch.clear();
                scratch.extend(x.iter().zip(&self.mean).map(|(a, m)| a - m));
                linalg::forward_substitute(l, d, scratch);
                scratch.iter().map(|v| v * v).sum::<f64>()
            }
            Factor::Spherical(var) => squared_distance(x, &self.mean) / var,
        };
        self.log_norm - 0.5 * maha
    }
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub(crate) fn densities(&self) -> Result<Vec<ComponentDensity>, ModelError> {
        let d = self.dims();
        let mut out = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let (factor, log_det, trace_inverse) = match &self.covariances {
                Covariances::Full(covs) => {
                    let flat: Vec<f64> = covs[k].iter().flatten().copied().collect();
                    let l = linalg::cholesky(&flat, d).ok_or_else(|| {
                        ModelError::Degenerate(format!(
                            "covariance of component {k} is not positive-definite"
                        ))
                    })?;
                    let log_det = linalg::log_det_from_cholesky(&l, d);
                    let tr = linalg::trace_inverse_from_cholesky(&l, d);
                    (Factor::Full(l), log_det, tr)
                }
                Covariances::Spherical(vars) => {
                    let v = vars[k];
                    if !(v > 0.0) {
                        return Err(ModelError::Degenerate(format!(
                            "variance of component {k} is not positive"
                        )));
                    }
                    (Factor::Spherical(v), d as f64 * v.ln(), d as f64 / v)
                }
            };
            out.push(ComponentDensity {
                mean: self.means[k].clone(),
                factor,
                log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
                trace_inverse,
            });
        }
        Ok(out)
    }

    /// `log(w_k) + log N(x; mu_k, S_k)` for every component.
    pub(crate) fn weighted_log_densities(
        &self,
        densities: &[ComponentDensity],
        x: &[f64],
        scratch: &mut Vec<f64>,
    ) -> Vec<f64> {
        densities
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w.ln() + c.log_density(x, scratch))
            .collect()
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// k-means++ seeding: returns `k` item indices.
fn kmeans_pp_seeds(latent: &LatentSpace, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = latent.rows();
    let mut seeds = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(latent.row(i), latent.row(seeds[0])))
        .collect();
    while seeds.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every point coincides with a seed already
            let free: Vec<usize> = (0..n).filter(|i| !seeds.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        seeds.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared_distance(latent.row(i), latent.row(next)));
        }
    }
    seeds
}

struct Sufficient {
    counts: Vec<f64>,
    means: Vec<Vec<f64>>,
}

/// Fits a `k`-component mixture. Deterministic for a fixed seed.
pub fn gmm_fit(
    latent: &LatentSpace,
    k: usize,
    mode: CovarianceMode,
    seed: u64,
    cfg: &LatentConfig,
) -> Result<GmmModel, ModelError> {
    let (n, d) = (latent.rows(), latent.dims());
    if k == 0 {
        return Err(ModelError::InvalidParameter(
            "component count must be >= 1".into(),
        ));
    }
    if n < k {
        return Err(ModelError::InvalidParameter(format!(
            "{n} items cannot support {k} components"
        )));
    }
    if d == 0 {
        return Err(ModelError::InvalidParameter(
            "latent space has no dimensions".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans_pp_seeds(latent, k, &mut rng);

    // hard responsibilities from the nearest seed
    let mut resp = vec![0.0; n * k];
    for i in 0..n {
        let x = latent.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &s) in seeds.iter().enumerate() {
            let dd = squared_distance(x, latent.row(s));
            if dd < best_d {
                best_d = dd;
                best = c;
            }
        }
        resp[i * k + best] = 1.0;
    }

    let global = global_moments(latent);
    let mut model = GmmModel {
        mode,
        weights: vec![1.0 / k as f64; k],
        means: seeds.iter().map(|&s| latent.row(s).to_vec()).collect(),
        covariances: match mode {
            CovarianceMode::Full => Covariances::Full(vec![vec![vec![0.0; d]; d]; k]),
            CovarianceMode::Spherical => Covariances::Spherical(vec![1.0; k]),
        },
        log_likelihood_trace: Vec::new(),
        reseed_iterations: Vec::new(),
        converged: false,
    };
    // Duplicate points can leave a seeded cluster empty here; it keeps weight
    // zero until the first EM M-step re-seeds it.
    m_step(latent, &resp, &mut model, cfg, &global, None);

    let mut reseeded_last_step = false;
    for iteration in 0..=cfg.em_max_iterations {
        let (objective, next_resp, point_loglik) =
            e_step(latent, &model, cfg.covariance_regularization, cfg.execution)?;
        if !objective.is_finite() {
            return Err(ModelError::NonFiniteLikelihood { iteration });
        }
        if reseeded_last_step {
            model
                .reseed_iterations
                .push(model.log_likelihood_trace.len());
        }
        model.log_likelihood_trace.push(objective);
        let t = model.log_likelihood_trace.len();
        if t >= 2 && !reseeded_last_step {
            let gain = objective - model.log_likelihood_trace[t - 2];
            if gain < cfg.em_tolerance {
                model.converged = true;
                break;
            }
        }
        if iteration == cfg.em_max_iterations {
            break;
        }
        resp = next_resp;
        reseeded_last_step = m_step(latent, &resp, &mut model, cfg, &global, Some(&point_loglik));
    }
    Ok(model)
}

struct GlobalMoments {
    covariance: Vec<Vec<f64>>,
    mean_variance: f64,
}

fn global_moments(latent: &LatentSpace) -> GlobalMoments {
    let (n, d) = (latent.rows(), latent.dims());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(latent.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..n {
        let x = latent.row(i);
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|v| *v /= n as f64);
    let mean_variance = (0..d).map(|a| cov[a][a]).sum::<f64>() / d as f64;
    GlobalMoments {
        covariance: cov,
        mean_variance,
    }
}

/// Returns the penalized objective, new responsibilities and per-item
/// mixture log-likelihoods.
fn e_step(
    latent: &LatentSpace,
    model: &GmmModel,
    eps: f64,
    exec: Execution,
) -> Result<(f64, Vec<f64>, Vec<f64>), ModelError> {
    let densities = model.densities()?;
    let k = model.components();
    let per_item = par::map_range(exec, latent.rows(), |i| {
        let mut scratch = Vec::new();
        let mut logs = model.weighted_log_densities(&densities, latent.row(i), &mut scratch);
        for (l, c) in logs.iter_mut().zip(&densities) {
            *l -= 0.5 * eps * c.trace_inverse;
        }
        let lse = log_sum_exp(&logs);
        let resp: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
        (lse, resp)
    });
    let mut objective = 0.0;
    let mut resp = Vec::with_capacity(latent.rows() * k);
    let mut point_loglik = Vec::with_capacity(latent.rows());
    for (lse, r) in per_item {
        objective += lse;
        point_loglik.push(lse);
        resp.extend(r);
    }
    Ok((objective, resp, point_loglik))
}

/// Updates parameters from responsibilities. Returns whether any component
/// had to be re-seeded.
fn m_step(
    latent: &LatentSpace,
    resp: &[f64],
    model: &mut GmmModel,
    cfg: &LatentConfig,
    global: &GlobalMoments,
    point_loglik: Option<&[f64]>,
) -> bool {
    let (n, d) = (latent.rows(), latent.dims());
    let k = model.components();
    let eps = cfg.covariance_regularization;

    let mut stats = Sufficient {
        counts: vec![0.0; k],
        means: vec![vec![0.0; d]; k],
    };
    for i in 0..n {
        let x = latent.row(i);
        for c in 0..k {
            let r = resp[i * k + c];
            if r == 0.0 {
                continue;
            }
            stats.counts[c] += r;
            for (m, xv) in stats.means[c].iter_mut().zip(x) {
                *m += r * xv;
            }
        }
    }

    // Components whose responsibility mass vanished.
    let empty: Vec<usize> = (0..k)
        .filter(|&c| stats.counts[c] < 1e-10 * n as f64)
        .collect();
    let mut reseed_points = Vec::new();
    if !empty.is_empty() {
        if let Some(ll) = point_loglik {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| ll[a].total_cmp(&ll[b]).then(a.cmp(&b)));
            reseed_points = order.into_iter().take(empty.len()).collect();
        }
    }

    for c in 0..k {
        if stats.counts[c] > 0.0 {
            let nk = stats.counts[c];
            stats.means[c].iter_mut().for_each(|m| *m /= nk);
        }
    }

    match &mut model.covariances {
        Covariances::Full(covs) => {
            for c in 0..k {
                let cov = &mut covs[c];
                cov.iter_mut().flatten().for_each(|v| *v = 0.0);
                let nk = stats.counts[c];
                if nk > 0.0 {
                    let mu = &stats.means[c];
                    let mut diff = vec![0.0; d];
                    for i in 0..n {
                        let r = resp[i * k + c];
                        if r == 0.0 {
                            continue;
                        }
                        for ((df, xv), m) in diff.iter_mut().zip(latent.row(i)).zip(mu) {
                            *df = xv - m;
                        }
                        for a in 0..d {
                            let ra = r * diff[a];
                            for b in a..d {
                                cov[a][b] += ra * diff[b];
                            }
                        }
                    }
                    for a in 0..d {
                        for b in a..d {
                            let v = cov[a][b] / nk;
                            cov[a][b] = v;
                            cov[b][a] = v;
                        }
                    }
                }
                for a in 0..d {
                    cov[a][a] += eps;
                }
            }
        }
        Covariances::Spherical(vars) => {
            for c in 0..k {
                let nk = stats.counts[c];
                let mut ss = 0.0;
                if nk > 0.0 {
                    for i in 0..n {
                        let r = resp[i * k + c];
                        if r != 0.0 {
                            ss += r * squared_distance(latent.row(i), &stats.means[c]);
                        }
                    }
                    vars[c] = ss / (nk * d as f64) + eps;
                } else {
                    vars[c] = eps;
                }
            }
        }
    }

    for c in 0..k {
        model.weights[c] = stats.counts[c] / n as f64;
    }
    model.means = stats.means;

    if empty.is_empty() || reseed_points.is_empty() {
        return false;
    }
    for (&c, &p) in empty.iter().zip(&reseed_points) {
        model.means[c] = latent.row(p).to_vec();
        model.weights[c] = 1.0 / n as f64;
        match &mut model.covariances {
            Covariances::Full(covs) => {
                covs[c] = global.covariance.clone();
                for a in 0..d {
                    covs[c][a][a] += eps;
                }
            }
            Covariances::Spherical(vars) => vars[c] = global.mean_variance + eps,
        }
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
    true
}

//! One-vs-rest linear max-margin classifiers with Platt calibration.
//!
//! Each class is trained with Pegasos-style stochastic subgradient descent on
//! `lambda / 2 * |w|^2 + mean hinge loss`, step `1 / (lambda * t)`, over a
//! seeded per-epoch shuffle. The bias is an extra constant feature, so it is
//! regularized along with the weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LatentConfig, ModelError};
use crate::artifact::LatentSpace;
use crate::par;

/// Sigmoid `P(y = 1 | f) = 1 / (1 + exp(a f + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    /// Calibrated probability, strictly inside (0, 1).
    pub fn probability(&self, decision: f64) -> f64 {
        let z = decision * self.a + self.b;
        let p = if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        };
        p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub platt: Vec<PlattParams>,
}

impl MarginModel {
    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn decision(&self, class: usize, x: &[f64]) -> f64 {
        self.weights[class]
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.biases[class]
    }

    /// Class with the largest decision value, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        (0..self.classes()).fold(0, |best, c| {
            if self.decision(c, x) > self.decision(best, x) {
                c
            } else {
                best
            }
        })
    }
}

pub fn margin_fit(
    latent: &LatentSpace,
    labels: &[usize],
    class_count: usize,
    seed: u64,
    cfg: &LatentConfig,
) -> Result<MarginModel, ModelError> {
    let n = latent.rows();
    if labels.len() != n {
        return Err(ModelError::InvalidParameter(format!(
            "{} labels for {n} latent rows",
            labels.len()
        )));
    }
    if class_count < 2 {
        return Err(ModelError::InvalidParameter(
            "need at least 2 classes".into(),
        ));
    }
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 {
        return Err(ModelError::InvalidParameter(
            "lambda must be > 0 and epochs >= 1".into(),
        ));
    }
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        if l >= class_count {
            return Err(ModelError::InvalidParameter(format!(
                "label {l} outside [0, {class_count})"
            )));
        }
        counts[l] += 1;
    }
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(ModelError::ClassTooSmall { class, count });
    }

    // Training runs on centered coordinates so the regularized bias stays
    // small; the bias is mapped back to the original coordinates after.
    let center: Vec<f64> = (0..latent.dims())
        .map(|j| (0..n).map(|i| latent.row(i)[j]).sum::<f64>() / n as f64)
        .collect();
    let fitted = par::map_range(cfg.execution, class_count, |class| {
        let (w, b) = train_one_vs_rest(latent, &center, labels, class, seed, cfg);
        let decisions: Vec<f64> = (0..n).map(|i| dot(&w, latent.row(i)) + b).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        let platt = fit_platt(&decisions, &positive, cfg);
        (w, b, platt)
    });

    let mut model = MarginModel {
        weights: Vec::with_capacity(class_count),
        biases: Vec::with_capacity(class_count),
        platt: Vec::with_capacity(class_count),
    };
    for (w, b, p) in fitted {
        model.weights.push(w);
        model.biases.push(b);
        model.platt.push(p);
    }
    Ok(model)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn train_one_vs_rest(
    latent: &LatentSpace,
    center: &[f64],
    labels: &[usize],
    class: usize,
    seed: u64,
    cfg: &LatentConfig,
) -> (Vec<f64>, f64) {
    let (n, d) = (latent.rows(), latent.dims());
    let lambda = cfg.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class as u64);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0u64;
    let mut x = vec![0.0; d];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            for ((xv, v), c) in x.iter_mut().zip(latent.row(i)).zip(center) {
                *xv = v - c;
            }
            let y = if labels[i] == class { 1.0 } else { -1.0 };
            let violated = y * (dot(&w, &x) + b) < 1.0;
            let shrink = 1.0 - 1.0 / t as f64;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if violated {
                for (wv, xv) in w.iter_mut().zip(&x) {
                    *wv += eta * y * xv;
                }
                b += eta * y;
            }
            let norm = (dot(&w, &w) + b * b).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
                b *= s;
            }
        }
    }
    let b = b - dot(&w, center);
    (w, b)
}

/// Platt's sigmoid fit with smoothed targets, by Newton's method with
/// backtracking line search.
fn fit_platt(decisions: &[f64], positive: &[bool], cfg: &LatentConfig) -> PlattParams {
    let prior1 = positive.iter().filter(|&&p| p).count() as f64;
    let prior0 = positive.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = f * a + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };

    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..cfg.platt_max_iterations {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&f, &t) in decisions.iter().zip(&targets) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < cfg.platt_tolerance && g2.abs() < cfg.platt_tolerance {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    PlattParams { a, b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn separable(n_per: usize, seed: u64) -> (LatentSpace, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let class = i % 2;
            let sign = if class == 1 { 1.0 } else { -1.0 };
            let x0 = sign * (1.0 + rng.random_range(0.0..3.0));
            rows.push(vec![
                x0,
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ]);
            labels.push(class);
        }
        (LatentSpace::from_rows(&rows), labels)
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (latent, labels) = separable(100, 3);
        let cfg = LatentConfig::default();
        let model = margin_fit(&latent, &labels, 2, 5, &cfg).unwrap();
        let hits = (0..latent.rows())
            .filter(|&i| model.predict(latent.row(i)) == labels[i])
            .count();
        assert_eq!(hits, latent.rows());
        let table = super::super::memberships(&model, &latent, &cfg).unwrap();
        assert_eq!(table.assignment, labels);
    }

    #[test]
    fn deterministic_for_seed() {
        let (latent, labels) = separable(50, 1);
        let cfg = LatentConfig::default();
        let a = margin_fit(&latent, &labels, 2, 9, &cfg).unwrap();
        let b = margin_fit(&latent, &labels, 2, 9, &cfg).unwrap();
        assert_eq!(a, b);
        let seq = LatentConfig {
            execution: crate::par::Execution::Sequential,
            ..cfg
        };
        assert_eq!(a, margin_fit(&latent, &labels, 2, 9, &seq).unwrap());
    }

    #[test]
    fn singleton_class_is_rejected() {
        let (latent, mut labels) = separable(10, 2);
        labels.iter_mut().for_each(|l| *l = 0);
        labels[7] = 1;
        assert_eq!(
            margin_fit(&latent, &labels, 2, 0, &LatentConfig::default()),
            Err(ModelError::ClassTooSmall { class: 1, count: 1 })
        );
    }

    #[test]
    fn platt_outputs_strictly_inside_unit_interval() {
        let p = PlattParams { a: -50.0, b: 0.0 };
        for f in [-1e6, -10.0, 0.0, 10.0, 1e6] {
            let v = p.probability(f);
            assert!(v > 0.0 && v < 1.0, "{f} -> {v}");
        }
    }

    #[test]
    fn platt_is_decreasing_in_a_for_separable_scores() {
        let decisions: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { 2.0 } else { -2.0 } + i as f64 * 0.01)
            .collect();
        let positive: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let p = fit_platt(&decisions, &positive, &LatentConfig::default());
        // positive decisions should map to high probability
        assert!(p.a < 0.0);
        assert!(p.probability(2.0) > 0.9);
        assert!(p.probability(-2.0) < 0.1);
    }
}

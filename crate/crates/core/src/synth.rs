//! Synthetic runs with known latent geometry.
//!
//! Items are drawn from unit-variance Gaussians around class means spread on
//! a sphere. Predictions are the Bayes decision after perturbing the class
//! log-posteriors, so mistakes land near class boundaries.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{ActivationMatrix, ItemMeta, RunArtifacts, StoreError};

pub const LATENT_LAYER: &str = "latent";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Gaussian noise on the log-posteriors; errors concentrate at boundaries.
    #[default]
    Boundary,
    /// Bayes prediction, then a uniform flip to another class with
    /// probability `label_noise`.
    UniformFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub items: usize,
    pub dims: usize,
    /// Radius of the sphere holding the class means.
    pub separation: f64,
    /// Neuron count of each hidden layer before the latent layer.
    pub layers: Vec<usize>,
    pub label_noise: f64,
    pub seed: u64,
    pub noise_mode: NoiseMode,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            items: 5000,
            dims: 16,
            separation: 8.0,
            layers: vec![128, 64],
            label_noise: 1.0,
            seed: 0,
            noise_mode: NoiseMode::Boundary,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.items < self.classes {
            return bad("need at least one item per class");
        }
        if self.dims == 0 {
            return bad("latent dims must be >= 1");
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad("separation must be positive");
        }
        if !(self.label_noise >= 0.0 && self.label_noise.is_finite()) {
            return bad("label noise must be >= 0");
        }
        if self.noise_mode == NoiseMode::UniformFlip && self.label_noise > 1.0 {
            return bad("flip probability must be <= 1");
        }
        if self.layers.contains(&0) {
            return bad("layer sizes must be >= 1");
        }
        Ok(())
    }
}

/// A generated run plus the generating truth.
#[derive(Debug, Clone)]
pub struct SynthRun {
    pub run: RunArtifacts,
    pub means: Vec<Vec<f64>>,
    /// Unshifted latent coordinates, row-major `items x dims`.
    pub latent: Vec<f64>,
    /// Noise-free posterior of each item's true class.
    pub true_class_posterior: Vec<f64>,
}

pub fn generate(spec: &SynthSpec) -> Result<RunArtifacts, SynthError> {
    Ok(generate_detailed(spec)?.run)
}

pub fn generate_detailed(spec: &SynthSpec) -> Result<SynthRun, SynthError> {
    spec.validate()?;
    let (c, n, d) = (spec.classes, spec.items, spec.dims);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let means: Vec<Vec<f64>> = (0..c)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                break v.iter().map(|x| x * spec.separation / norm).collect();
            }
        })
        .collect();

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);

    let mut latent = Vec::with_capacity(n * d);
    for &label in &labels {
        latent.extend(means[label].iter().map(|m| m + normal(&mut rng)));
    }

    let mut items = Vec::with_capacity(n);
    let mut true_class_posterior = Vec::with_capacity(n);
    let mut log_post = vec![0.0; c];
    for (i, &label) in labels.iter().enumerate() {
        let x = &latent[i * d..(i + 1) * d];
        for (lp, mean) in log_post.iter_mut().zip(&means) {
            *lp = -0.5
                * x.iter()
                    .zip(mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
        }
        let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = log_post.iter().map(|lp| (lp - top).exp()).sum();
        true_class_posterior.push((log_post[label] - top).exp() / z);

        let predicted = match spec.noise_mode {
            NoiseMode::Boundary => {
                let noisy: Vec<f64> = log_post
                    .iter()
                    .map(|lp| lp + spec.label_noise * normal(&mut rng))
                    .collect();
                argmax(&noisy)
            }
            NoiseMode::UniformFlip => {
                let bayes = argmax(&log_post);
                if rng.random_bool(spec.label_noise) {
                    let other = rng.random_range(0..c - 1);
                    if other >= bayes {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    bayes
                }
            }
        };
        items.push(ItemMeta {
            true_label: label,
            predicted_label: predicted,
        });
    }

    let mut layers = Vec::with_capacity(spec.layers.len() + 1);
    for (l, &width) in spec.layers.iter().enumerate() {
        let scale = 1.0 / (d as f64).sqrt();
        let w: Vec<f64> = (0..width * d).map(|_| normal(&mut rng) * scale).collect();
        let b: Vec<f64> = (0..width).map(|_| normal(&mut rng) * 0.5).collect();
        let mut values = Vec::with_capacity(n * width);
        for i in 0..n {
            let x = &latent[i * d..(i + 1) * d];
            for j in 0..width {
                let pre: f64 = b[j]
                    + w[j * d..(j + 1) * d]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                values.push(pre.max(0.0) as f32);
            }
        }
        layers.push(ActivationMatrix::new(
            format!("dense{}", l + 1),
            n,
            width,
            values,
        )?);
    }

    // The latent layer is x translated so every coordinate is nonnegative,
    // which keeps the activation invariant without changing the geometry.
    let mins: Vec<f64> = (0..d)
        .map(|j| {
            (0..n)
                .map(|i| latent[i * d + j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let shifted = latent
        .chunks(d)
        .flat_map(|row| row.iter().zip(&mins).map(|(x, m)| (x - m) as f32))
        .collect();
    layers.push(ActivationMatrix::new(LATENT_LAYER, n, d, shifted)?);

    let run = RunArtifacts::new(
        format!("synth-c{c}-n{n}-d{d}-s{}", spec.seed),
        c,
        layers,
        items,
        LATENT_LAYER,
    )?;
    Ok(SynthRun {
        run,
        means,
        latent,
        true_class_posterior,
    })
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, j| if v[j] > v[best] { j } else { best })
}

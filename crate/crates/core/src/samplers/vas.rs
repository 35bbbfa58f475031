//! Visualization-aware sampling by single-pass interchange.
//!
//! The loss of a subset `S` is `sum over pairs p < q in S of
//! exp(-|x_p - x_q|^2 / eps^2)` over latent coordinates. Starting from a
//! seeded uniform subset, each non-member is offered once and swapped for the
//! member whose replacement lowers the loss most, if the loss strictly drops.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{floor_count, Sample, SampleError, SampleSpec, VasEpsilon};
use crate::artifact::{squared_distance, LatentSpace, RunArtifacts};

const EPSILON_SUBSAMPLE: usize = 1000;

/// Accepted swaps and the loss after each.
#[derive(Debug, Clone, PartialEq)]
pub struct VasTrace {
    pub epsilon: f64,
    pub initial_loss: f64,
    /// Loss after every accepted swap, in order.
    pub accepted_losses: Vec<f64>,
}

impl VasTrace {
    pub fn final_loss(&self) -> f64 {
        self.accepted_losses
            .last()
            .copied()
            .unwrap_or(self.initial_loss)
    }
}

fn kernel(a: &[f64], b: &[f64], inv_eps2: f64) -> f64 {
    (-squared_distance(a, b) * inv_eps2).exp()
}

/// Direct pairwise loss of `ids`.
pub fn kernel_loss(latent: &LatentSpace, ids: &[usize], epsilon: f64) -> f64 {
    let inv = 1.0 / (epsilon * epsilon);
    let mut total = 0.0;
    for (a, &p) in ids.iter().enumerate() {
        for &q in &ids[a + 1..] {
            total += kernel(latent.row(p), latent.row(q), inv);
        }
    }
    total
}

/// Median pairwise distance over a seeded subsample of at most 1000 points.
fn auto_epsilon(latent: &LatentSpace, rng: &mut ChaCha8Rng) -> f64 {
    let n = latent.rows();
    let ids = index::sample(rng, n, n.min(EPSILON_SUBSAMPLE)).into_vec();
    let mut d: Vec<f64> = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
    for (a, &p) in ids.iter().enumerate() {
        for &q in &ids[a + 1..] {
            d.push(squared_distance(latent.row(p), latent.row(q)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

pub fn vas_sample(run: &RunArtifacts, spec: &SampleSpec) -> Result<Sample, SampleError> {
    vas_sample_traced(run, spec).map(|(s, _)| s)
}

pub fn vas_sample_traced(
    run: &RunArtifacts,
    spec: &SampleSpec,
) -> Result<(Sample, VasTrace), SampleError> {
    spec.validate()?;
    let latent = run.latent();
    let n = latent.rows();
    let k = floor_count(spec.fraction, n);
    if k < 2 {
        return Err(SampleError::InvalidParameter(format!(
            "VAS needs a sample of at least 2 items, fraction {} of {n} gives {k}",
            spec.fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let epsilon = match spec.vas_epsilon {
        VasEpsilon::Auto => auto_epsilon(latent, &mut rng),
        VasEpsilon::Fixed(e) => e,
    };
    let inv = 1.0 / (epsilon * epsilon);

    let mut members = index::sample(&mut rng, n, k).into_vec();
    members.sort_unstable();
    let mut in_sample = vec![false; n];
    for &m in &members {
        in_sample[m] = true;
    }
    let mut outsiders: Vec<usize> = (0..n).filter(|&i| !in_sample[i]).collect();
    outsiders.shuffle(&mut rng);

    // contribution[m] = sum of kernel(m, q) over the other members
    let mut contribution = vec![0.0; k];
    for a in 0..k {
        for b in a + 1..k {
            let v = kernel(latent.row(members[a]), latent.row(members[b]), inv);
            contribution[a] += v;
            contribution[b] += v;
        }
    }
    let initial_loss = contribution.iter().sum::<f64>() / 2.0;
    let mut loss = initial_loss;
    let mut accepted_losses = Vec::new();

    let mut kx = vec![0.0; k];
    for x in outsiders {
        let xr = latent.row(x);
        for (slot, &m) in kx.iter_mut().zip(&members) {
            *slot = kernel(xr, latent.row(m), inv);
        }
        let kx_total: f64 = kx.iter().sum();
        // loss change when x replaces members[a]
        let (best, delta) = (0..k)
            .map(|a| (a, kx_total - kx[a] - contribution[a]))
            .fold(
                (0, f64::INFINITY),
                |acc, cur| if cur.1 < acc.1 { cur } else { acc },
            );
        let new_loss = loss + delta;
        if !(new_loss < loss) {
            continue;
        }
        let out = members[best];
        let out_row = latent.row(out);
        for a in 0..k {
            if a != best {
                contribution[a] += kx[a] - kernel(out_row, latent.row(members[a]), inv);
            }
        }
        contribution[best] = kx_total - kx[best];
        members[best] = x;
        loss = new_loss;
        accepted_losses.push(loss);
    }

    Ok((
        Sample::from_ids(*spec, members),
        VasTrace {
            epsilon,
            initial_loss,
            accepted_losses,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{ActivationMatrix, ItemMeta};
    use crate::samplers::Strategy;

    fn run_from(rows: &[Vec<f32>]) -> RunArtifacts {
        let n = rows.len();
        let d = rows[0].len();
        RunArtifacts::new(
            "v",
            2,
            vec![
                ActivationMatrix::new("latent", n, d, rows.iter().flatten().copied().collect())
                    .unwrap(),
            ],
            vec![
                ItemMeta {
                    true_label: 0,
                    predicted_label: 0
                };
                n
            ],
            "latent",
        )
        .unwrap()
    }

    #[test]
    fn full_fraction_is_everything() {
        let rows: Vec<Vec<f32>> = (0..30).map(|i| vec![i as f32, (i % 4) as f32]).collect();
        let run = run_from(&rows);
        let (s, trace) = vas_sample_traced(&run, &SampleSpec::new(Strategy::Vas, 1.0, 0)).unwrap();
        assert_eq!(s.len(), 30);
        assert!(trace.accepted_losses.is_empty());
    }

    #[test]
    fn collinear_triple_converges_to_extremes() {
        let rows = vec![vec![0.0f32], vec![1.0], vec![2.0]];
        let run = run_from(&rows);
        // brute force over all 2-subsets
        let latent = run.latent();
        let subsets = [[0usize, 1], [0, 2], [1, 2]];
        let eps = 1.0; // median of {1, 1, 2}
        let best = subsets
            .iter()
            .min_by(|a, b| kernel_loss(latent, *a, eps).total_cmp(&kernel_loss(latent, *b, eps)))
            .unwrap();
        assert_eq!(best, &[0, 2]);
        for seed in 0..20 {
            let (s, trace) =
                vas_sample_traced(&run, &SampleSpec::new(Strategy::Vas, 0.67, seed)).unwrap();
            assert_eq!(trace.epsilon, 1.0);
            assert_eq!(s.item_ids(), best.to_vec(), "seed {seed}");
        }
    }

    #[test]
    fn loss_strictly_decreases_and_matches_direct_evaluation() {
        let rows: Vec<Vec<f32>> = (0..200)
            .map(|i| vec![((i * 37) % 101) as f32 * 0.1, ((i * 13) % 17) as f32 * 0.3])
            .collect();
        let run = run_from(&rows);
        for seed in 0..5 {
            let (s, trace) =
                vas_sample_traced(&run, &SampleSpec::new(Strategy::Vas, 0.1, seed)).unwrap();
            let mut prev = trace.initial_loss;
            for &l in &trace.accepted_losses {
                assert!(l < prev);
                prev = l;
            }
            let direct = kernel_loss(run.latent(), &s.item_ids(), trace.epsilon);
            assert!((direct - trace.final_loss()).abs() < 1e-8 * direct.max(1.0));
            assert!(trace.final_loss() <= trace.initial_loss);
        }
    }

    #[test]
    fn too_small_sample_is_rejected() {
        let rows: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32]).collect();
        let run = run_from(&rows);
        assert!(vas_sample(&run, &SampleSpec::new(Strategy::Vas, 0.1, 0)).is_err());
    }
}

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{floor_count, End, Sample, SampleEntry, SampleError, SampleSpec};
use crate::artifact::{LatentSpace, RunArtifacts};
use crate::latent::pca_fit;

/// Equal-width cell index of every row, encoded mixed-radix over dimensions.
fn grid_cells(points: &LatentSpace, bins: usize) -> Vec<u64> {
    let (n, d) = (points.rows(), points.dims());
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for (j, &v) in points.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    (0..n)
        .map(|i| {
            points.row(i).iter().enumerate().fold(0u64, |key, (j, &v)| {
                let width = hi[j] - lo[j];
                let b = if width > 0.0 {
                    (((v - lo[j]) / width * bins as f64).floor() as usize).min(bins - 1)
                } else {
                    0
                };
                key * bins as u64 + b as u64
            })
        })
        .collect()
}

/// Equal allocation of `target` draws across cells of the given populations.
///
/// Every cell starts at `target / cells`; the remainder goes one apiece to the
/// most populous cells. Cells that cannot fill their quota give it up, and the
/// shortfall is handed out one apiece, round-robin, to the most populous cells
/// with spare items.
pub(crate) fn allocate_equal(populations: &[usize], target: usize) -> Vec<usize> {
    let m = populations.len();
    if m == 0 {
        return Vec::new();
    }
    let mut by_pop: Vec<usize> = (0..m).collect();
    by_pop.sort_by(|&a, &b| populations[b].cmp(&populations[a]).then(a.cmp(&b)));

    let mut quota = vec![target / m; m];
    for &c in by_pop.iter().take(target % m) {
        quota[c] += 1;
    }
    let mut shortfall = 0;
    for (q, &p) in quota.iter_mut().zip(populations) {
        if *q > p {
            shortfall += *q - p;
            *q = p;
        }
    }
    while shortfall > 0 {
        let mut gave = false;
        for &c in &by_pop {
            if shortfall == 0 {
                break;
            }
            if quota[c] < populations[c] {
                quota[c] += 1;
                shortfall -= 1;
                gave = true;
            }
        }
        if !gave {
            break;
        }
    }
    quota
}

/// PCA to `grid_dims`, equal-width `grid_bins` per dimension, equal draws per
/// nonempty cell. The stratum id is the cell's rank among nonempty cells.
pub fn latent_grid_sample(run: &RunArtifacts, spec: &SampleSpec) -> Result<Sample, SampleError> {
    spec.validate()?;
    let latent = run.latent();
    if spec.grid_dims > latent.dims() {
        return Err(SampleError::InvalidParameter(format!(
            "grid dims {} exceed latent dims {}",
            spec.grid_dims,
            latent.dims()
        )));
    }
    let n = run.item_count();
    let target = floor_count(spec.fraction, n);
    let projected = match pca_fit(latent, spec.grid_dims) {
        Ok(pca) => pca.transform(latent)?,
        // a constant latent space is a single cell
        Err(crate::latent::ModelError::Degenerate(_)) => LatentSpace::from_flat(n, 1, vec![0.0; n]),
        Err(e) => return Err(e.into()),
    };

    let mut cells: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, key) in grid_cells(&projected, spec.grid_bins)
        .into_iter()
        .enumerate()
    {
        cells.entry(key).or_default().push(i);
    }
    let members: Vec<Vec<usize>> = cells.into_values().collect();
    let populations: Vec<usize> = members.iter().map(Vec::len).collect();
    let quota = allocate_equal(&populations, target);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entries = Vec::with_capacity(target);
    for (cell, ids) in members.iter().enumerate() {
        if quota[cell] == 0 {
            continue;
        }
        for pos in index::sample(&mut rng, ids.len(), quota[cell]) {
            entries.push(SampleEntry {
                item_id: ids[pos],
                cluster: Some(cell),
                end: End::NotApplicable,
            });
        }
    }
    Ok(Sample::from_entries(*spec, entries, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{ActivationMatrix, ItemMeta};
    use crate::samplers::{uniform_sample, Strategy};

    fn run_from_latent(rows: &[Vec<f32>]) -> RunArtifacts {
        let n = rows.len();
        let d = rows[0].len();
        let values: Vec<f32> = rows.iter().flatten().copied().collect();
        RunArtifacts::new(
            "g",
            2,
            vec![ActivationMatrix::new("latent", n, d, values).unwrap()],
            (0..n)
                .map(|i| ItemMeta {
                    true_label: i % 2,
                    predicted_label: i % 2,
                })
                .collect(),
            "latent",
        )
        .unwrap()
    }

    #[test]
    fn equal_split_across_32_cells() {
        let pops = vec![10; 32];
        assert_eq!(allocate_equal(&pops, 64), vec![2; 32]);
    }

    #[test]
    fn shortfall_is_redistributed() {
        // cell 1 has one point but a quota of 2
        let q = allocate_equal(&[5, 1, 4], 6);
        assert_eq!(q.iter().sum::<usize>(), 6);
        assert_eq!(q[1], 1);
        assert_eq!(q, vec![3, 1, 2]);
        // remainder goes to the most populous cells first
        assert_eq!(allocate_equal(&[3, 9, 6], 4), vec![1, 2, 1]);
        // exhaustive: total is min(target, population) and quotas fit
        for a in 0..5usize {
            for b in 0..5usize {
                for c in 1..5usize {
                    let pops = [a, b, c];
                    let total: usize = pops.iter().sum();
                    for target in 0..=total {
                        let q = allocate_equal(&pops, target);
                        assert_eq!(q.iter().sum::<usize>(), target);
                        assert!(q.iter().zip(pops).all(|(q, p)| *q <= p));
                    }
                }
            }
        }
    }

    #[test]
    fn single_cell_is_uniform() {
        // a constant latent space collapses to one cell
        let rows = vec![vec![1.0f32, 1.0]; 50];
        let run = run_from_latent(&rows);
        let mut spec = SampleSpec::new(Strategy::LatentGrid, 0.2, 3);
        spec.grid_dims = 2;
        let s = latent_grid_sample(&run, &spec).unwrap();
        let u = uniform_sample(&run, &SampleSpec::new(Strategy::Uniform, 0.2, 3)).unwrap();
        assert_eq!(s.item_ids(), u.item_ids());
    }

    #[test]
    fn full_fraction_takes_everything() {
        let rows: Vec<Vec<f32>> = (0..40)
            .map(|i| vec![(i % 7) as f32, (i * i % 11) as f32])
            .collect();
        let run = run_from_latent(&rows);
        let mut spec = SampleSpec::new(Strategy::LatentGrid, 1.0, 0);
        spec.grid_dims = 2;
        assert_eq!(latent_grid_sample(&run, &spec).unwrap().len(), 40);
    }

    #[test]
    fn too_many_dims_is_rejected() {
        let rows: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32, 1.0]).collect();
        let run = run_from_latent(&rows);
        let spec = SampleSpec::new(Strategy::LatentGrid, 0.5, 0);
        assert!(latent_grid_sample(&run, &spec).is_err());
    }
}

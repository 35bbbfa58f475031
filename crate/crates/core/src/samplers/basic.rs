use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{floor_count, round_count, End, Sample, SampleEntry, SampleError, SampleSpec};
use crate::artifact::RunArtifacts;

/// `floor(f * N)` ids uniformly without replacement.
pub fn uniform_sample(run: &RunArtifacts, spec: &SampleSpec) -> Result<Sample, SampleError> {
    spec.validate()?;
    let n = run.item_count();
    let take = floor_count(spec.fraction, n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids = index::sample(&mut rng, n, take).into_vec();
    Ok(Sample::from_ids(*spec, ids))
}

/// Proportional allocation of `target` draws over strata of the given sizes.
///
/// Each stratum gets `round(f * size)`. Nonempty strata that round to zero get
/// one draw as long as `target` can cover one draw per nonempty stratum. The
/// total is then brought to `target` by trimming from the largest strata
/// (never below one draw while a stratum above one remains) or padding into
/// the largest strata with spare items.
pub(crate) fn allocate_proportional(sizes: &[usize], fraction: f64, target: usize) -> Vec<usize> {
    let mut quota: Vec<usize> = sizes.iter().map(|&s| round_count(fraction, s)).collect();
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if nonempty <= target {
        for (q, &s) in quota.iter_mut().zip(sizes) {
            if s > 0 && *q == 0 {
                *q = 1;
            }
        }
    }
    let mut total: usize = quota.iter().sum();
    // largest size first, lowest index on ties
    let mut by_size: Vec<usize> = (0..sizes.len()).collect();
    by_size.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    while total > target {
        let c = by_size
            .iter()
            .copied()
            .find(|&c| quota[c] > 1)
            .or_else(|| by_size.iter().copied().find(|&c| quota[c] > 0))
            .expect("positive total implies a positive quota");
        quota[c] -= 1;
        total -= 1;
    }
    while total < target {
        let Some(&c) = by_size.iter().find(|&&c| quota[c] < sizes[c]) else {
            break;
        };
        quota[c] += 1;
        total += 1;
    }
    quota
}

/// Draws from each (true, predicted) confusion-matrix cell in proportion to
/// its size. Stratum id is `true * C + predicted`.
pub fn stratified_cm_sample(run: &RunArtifacts, spec: &SampleSpec) -> Result<Sample, SampleError> {
    spec.validate()?;
    let c = run.class_count;
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); c * c];
    for (i, m) in run.items().iter().enumerate() {
        cells[m.true_label * c + m.predicted_label].push(i);
    }
    let sizes: Vec<usize> = cells.iter().map(Vec::len).collect();
    let target = floor_count(spec.fraction, run.item_count());
    let quota = allocate_proportional(&sizes, spec.fraction, target);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entries = Vec::with_capacity(target);
    for (cell, members) in cells.iter().enumerate() {
        if quota[cell] == 0 {
            continue;
        }
        for pos in index::sample(&mut rng, members.len(), quota[cell]) {
            entries.push(SampleEntry {
                item_id: members[pos],
                cluster: Some(cell),
                end: End::NotApplicable,
            });
        }
    }
    Ok(Sample::from_entries(*spec, entries, Vec::new()))
}

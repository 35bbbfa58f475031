use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    floor_count, round_count, ClusterTake, End, Sample, SampleEntry, SampleError, SampleSpec,
};
use crate::artifact::RunArtifacts;
use crate::latent::MembershipTable;

fn check_table(run: &RunArtifacts, table: &MembershipTable) -> Result<(), SampleError> {
    if table.items() != run.item_count() {
        return Err(SampleError::MembershipMismatch {
            expected: run.item_count(),
            found: table.items(),
        });
    }
    Ok(())
}

/// Cluster members sorted ascending by likelihood ratio, ties by item id.
/// The head holds outliers, the tail exemplars.
pub(crate) fn sorted_clusters(table: &MembershipTable) -> Vec<Vec<usize>> {
    let mut groups = table.groups();
    for g in &mut groups {
        g.sort_by(|&a, &b| {
            table.likelihood_ratio[a]
                .total_cmp(&table.likelihood_ratio[b])
                .then(a.cmp(&b))
        });
    }
    groups
}

/// Per cluster, `n_c = round(f * size)` items: `floor(n_c * j)` from the
/// outlier head and the rest from the exemplar tail.
pub fn clustered_sample(
    run: &RunArtifacts,
    table: &MembershipTable,
    spec: &SampleSpec,
) -> Result<Sample, SampleError> {
    spec.validate()?;
    check_table(run, table)?;
    let mut entries = Vec::new();
    let mut takes = Vec::new();
    for (cluster, members) in sorted_clusters(table).iter().enumerate() {
        let size = members.len();
        if size == 0 {
            continue;
        }
        let budget = round_count(spec.fraction, size);
        let (head, tail) = if budget >= size {
            let head = floor_count(spec.tuning, size);
            (head, size - head)
        } else {
            let head = floor_count(spec.tuning, budget);
            (head, budget - head)
        };
        for (rank, &item_id) in members.iter().enumerate() {
            let end = if rank < head {
                End::Head
            } else if rank >= size - tail {
                End::Tail
            } else {
                continue;
            };
            entries.push(SampleEntry {
                item_id,
                cluster: Some(cluster),
                end,
            });
        }
        takes.push(ClusterTake {
            cluster,
            size,
            budget: head + tail,
            head,
            tail,
        });
    }
    Ok(Sample::from_entries(*spec, entries, takes))
}

/// Per cluster, `n_c` items without replacement with probability proportional
/// to `1 / max(ratio, 1e-12)`.
pub fn weighted_sample(
    run: &RunArtifacts,
    table: &MembershipTable,
    spec: &SampleSpec,
) -> Result<Sample, SampleError> {
    spec.validate()?;
    check_table(run, table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entries = Vec::new();
    let mut takes = Vec::new();
    for (cluster, members) in table.groups().iter().enumerate() {
        let size = members.len();
        if size == 0 {
            continue;
        }
        let budget = round_count(spec.fraction, size);
        let picks = index::sample_weighted(
            &mut rng,
            size,
            |pos| 1.0 / table.likelihood_ratio[members[pos]].max(1e-12),
            budget,
        )
        .map_err(|e| SampleError::InvalidParameter(format!("weighted draw: {e}")))?;
        for pos in picks {
            entries.push(SampleEntry {
                item_id: members[pos],
                cluster: Some(cluster),
                end: End::NotApplicable,
            });
        }
        takes.push(ClusterTake {
            cluster,
            size,
            budget,
            head: 0,
            tail: 0,
        });
    }
    Ok(Sample::from_entries(*spec, entries, takes))
}

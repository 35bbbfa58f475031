use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::cells::{cell_items, QueryCell};
use super::QueryError;
use crate::artifact::{ActivationMatrix, RunArtifacts};
use crate::samplers::Sample;

/// How S1 ranks neurons over a set of items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankBy {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    /// Best first.
    pub indices: Vec<usize>,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgVector {
    pub values: Vec<f64>,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxDist {
    /// Probability vector, or all zeros when `empty`.
    pub values: Vec<f64>,
    pub empty: bool,
}

#[derive(Clone, Copy, PartialEq)]
struct Ranked {
    score: f64,
    index: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    /// Greater is better: higher score, then lower index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Indices of the `k` largest scores, best first, ties to the lower index.
/// Bounded min-heap, `O(n log k)`.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
    for (index, &score) in scores.iter().enumerate() {
        let cand = Ranked { score, index };
        if heap.len() < k {
            heap.push(Reverse(cand));
        } else if cand > heap.peek().expect("heap holds k items").0 {
            heap.pop();
            heap.push(Reverse(cand));
        }
    }
    let mut kept: Vec<Ranked> = heap.into_iter().map(|r| r.0).collect();
    kept.sort_by(|a, b| b.cmp(a));
    kept.into_iter().map(|r| r.index).collect()
}

/// Sum, max and argmax histogram of one layer over a set of items.
#[derive(Debug, Clone)]
pub(crate) struct LayerAccumulator {
    pub count: usize,
    pub sum: Vec<f64>,
    pub max: Vec<f64>,
    pub argmax_counts: Vec<usize>,
}

impl LayerAccumulator {
    pub fn new(neurons: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; neurons],
            max: vec![f64::NEG_INFINITY; neurons],
            argmax_counts: vec![0; neurons],
        }
    }

    pub fn add(&mut self, row: &[f32], argmax: usize) {
        self.count += 1;
        for ((s, m), &v) in self.sum.iter_mut().zip(self.max.iter_mut()).zip(row) {
            let v = f64::from(v);
            *s += v;
            if v > *m {
                *m = v;
            }
        }
        self.argmax_counts[argmax] += 1;
    }

    pub fn avg(&self) -> AvgVector {
        if self.count == 0 {
            return AvgVector {
                values: vec![0.0; self.sum.len()],
                empty: true,
            };
        }
        let n = self.count as f64;
        AvgVector {
            values: self.sum.iter().map(|s| s / n).collect(),
            empty: false,
        }
    }

    pub fn scores(&self, rank_by: RankBy) -> Vec<f64> {
        match rank_by {
            RankBy::Mean => self.avg().values,
            RankBy::Max => self.max.clone(),
        }
    }

    pub fn topk(&self, k: usize, rank_by: RankBy) -> TopK {
        if self.count == 0 {
            return TopK {
                indices: Vec::new(),
                empty: true,
            };
        }
        TopK {
            indices: top_k_indices(&self.scores(rank_by), k),
            empty: false,
        }
    }

    pub fn maxdist(&self) -> MaxDist {
        if self.count == 0 {
            return MaxDist {
                values: vec![0.0; self.argmax_counts.len()],
                empty: true,
            };
        }
        let n = self.count as f64;
        MaxDist {
            values: self.argmax_counts.iter().map(|&c| c as f64 / n).collect(),
            empty: false,
        }
    }
}

/// First index of the largest value; all-zero rows give 0.
pub(crate) fn row_argmax(row: &[f32]) -> usize {
    (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
}

fn accumulate(layer: &ActivationMatrix, items: &[usize]) -> LayerAccumulator {
    let mut acc = LayerAccumulator::new(layer.cols());
    for &i in items {
        let row = layer.row(i);
        acc.add(row, row_argmax(row));
    }
    acc
}

fn cell_accumulator(
    run: &RunArtifacts,
    cell: &QueryCell,
    restrict: Option<&Sample>,
) -> Result<LayerAccumulator, QueryError> {
    let items = cell_items(run, cell, restrict)?;
    Ok(accumulate(&run.layers()[cell.layer], &items))
}

/// S1: the `k` neurons of the cell's layer with the highest score over the
/// cell's items. `k` beyond the neuron count is truncated.
pub fn s1_topk(
    run: &RunArtifacts,
    cell: &QueryCell,
    k: usize,
    restrict: Option<&Sample>,
    rank_by: RankBy,
) -> Result<TopK, QueryError> {
    if k == 0 {
        return Err(QueryError::InvalidK);
    }
    Ok(cell_accumulator(run, cell, restrict)?.topk(k, rank_by))
}

/// S2: per-neuron mean activation over the cell's items.
pub fn s2_avg(
    run: &RunArtifacts,
    cell: &QueryCell,
    restrict: Option<&Sample>,
) -> Result<AvgVector, QueryError> {
    Ok(cell_accumulator(run, cell, restrict)?.avg())
}

/// S3: normalized histogram of each item's most activated neuron.
pub fn s3_maxdist(
    run: &RunArtifacts,
    cell: &QueryCell,
    restrict: Option<&Sample>,
) -> Result<MaxDist, QueryError> {
    Ok(cell_accumulator(run, cell, restrict)?.maxdist())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::ItemMeta;
    use crate::query::Correctness;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run_of(rows: &[Vec<f32>]) -> RunArtifacts {
        let n = rows.len();
        let d = rows[0].len();
        RunArtifacts::new(
            "s",
            2,
            vec![
                ActivationMatrix::new("l", n, d, rows.iter().flatten().copied().collect()).unwrap(),
            ],
            vec![
                ItemMeta {
                    true_label: 0,
                    predicted_label: 0
                };
                n
            ],
            "l",
        )
        .unwrap()
    }

    fn full_sort_oracle(scores: &[f64], k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }

    const CELL: QueryCell = QueryCell {
        layer: 0,
        class_label: 0,
        correctness: Correctness::Correct,
    };

    #[test]
    fn single_item_ranking() {
        let run = run_of(&[vec![0.5, 2.0, 0.0, 2.0, 1.0]]);
        let top = s1_topk(&run, &CELL, 3, None, RankBy::Mean).unwrap();
        assert_eq!(top.indices, vec![1, 3, 4]);
        let all = s1_topk(&run, &CELL, 5, None, RankBy::Mean).unwrap();
        let mut sorted = all.indices.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        // k larger than the layer truncates
        assert_eq!(
            s1_topk(&run, &CELL, 50, None, RankBy::Mean)
                .unwrap()
                .indices
                .len(),
            5
        );
        assert_eq!(
            s1_topk(&run, &CELL, 0, None, RankBy::Mean),
            Err(QueryError::InvalidK)
        );
    }

    #[test]
    fn heap_matches_full_sort_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let rows: Vec<Vec<f32>> = (0..200)
                .map(|_| {
                    (0..50)
                        .map(|_| rng.random_range(0..8) as f32 * 0.5)
                        .collect()
                })
                .collect();
            let run = run_of(&rows);
            let scores = s2_avg(&run, &CELL, None).unwrap().values;
            for k in 1..=50 {
                let got = s1_topk(&run, &CELL, k, None, RankBy::Mean).unwrap();
                assert_eq!(got.indices, full_sort_oracle(&scores, k), "k={k}");
            }
        }
    }

    #[test]
    fn averages() {
        let run = run_of(&[vec![1.0, 4.0, 0.0]]);
        assert_eq!(
            s2_avg(&run, &CELL, None).unwrap().values,
            vec![1.0, 4.0, 0.0]
        );
        let run = run_of(&[vec![1.0, 4.0, 0.0], vec![3.0, 0.0, 1.0]]);
        assert_eq!(
            s2_avg(&run, &CELL, None).unwrap().values,
            vec![2.0, 2.0, 0.5]
        );
    }

    #[test]
    fn average_matches_compensated_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f32>> = (0..500)
            .map(|_| (0..20).map(|_| rng.random_range(0.0f32..1000.0)).collect())
            .collect();
        let run = run_of(&rows);
        let got = s2_avg(&run, &CELL, None).unwrap().values;
        for j in 0..20 {
            // Kahan summation
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for r in &rows {
                let y = f64::from(r[j]) - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            let want = sum / rows.len() as f64;
            assert!(((got[j] - want) / want).abs() < 1e-6);
        }
    }

    #[test]
    fn max_distribution() {
        let run = run_of(&[vec![0.0, 0.0, 0.0, 5.0], vec![1.0, 2.0, 0.0, 9.0]]);
        assert_eq!(
            s3_maxdist(&run, &CELL, None).unwrap().values,
            vec![0.0, 0.0, 0.0, 1.0]
        );
        let run = run_of(&[vec![3.0, 1.0, 0.0], vec![0.0, 2.0, 0.0]]);
        assert_eq!(
            s3_maxdist(&run, &CELL, None).unwrap().values,
            vec![0.5, 0.5, 0.0]
        );
        // all-zero row and ties resolve to the lowest index
        let run = run_of(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(
            s3_maxdist(&run, &CELL, None).unwrap().values,
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn max_distribution_matches_naive_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<Vec<f32>> = (0..100)
            .map(|_| (0..12).map(|_| rng.random_range(0..4) as f32).collect())
            .collect();
        let run = run_of(&rows);
        let mut counts = [0usize; 12];
        for r in &rows {
            let mut best = 0;
            for j in 1..12 {
                if r[j] > r[best] {
                    best = j;
                }
            }
            counts[best] += 1;
        }
        let want: Vec<f64> = counts.iter().map(|&c| c as f64 / 100.0).collect();
        assert_eq!(s3_maxdist(&run, &CELL, None).unwrap().values, want);
    }

    #[test]
    fn rank_by_max() {
        let run = run_of(&[
            vec![0.0, 10.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ]);
        assert_eq!(
            s1_topk(&run, &CELL, 1, None, RankBy::Mean).unwrap().indices,
            vec![1]
        );
        assert_eq!(
            s1_topk(&run, &CELL, 1, None, RankBy::Max).unwrap().indices,
            vec![1]
        );
        let run = run_of(&[vec![3.0, 2.5], vec![0.0, 2.5]]);
        assert_eq!(
            s1_topk(&run, &CELL, 1, None, RankBy::Mean).unwrap().indices,
            vec![1]
        );
        assert_eq!(
            s1_topk(&run, &CELL, 1, None, RankBy::Max).unwrap().indices,
            vec![0]
        );
    }

    #[test]
    fn empty_cell_results_are_flagged() {
        let run = run_of(&[vec![1.0, 2.0]]);
        let cell = QueryCell::new(0, 0, Correctness::Incorrect);
        assert!(s1_topk(&run, &cell, 1, None, RankBy::Mean).unwrap().empty);
        let avg = s2_avg(&run, &cell, None).unwrap();
        assert!(avg.empty && avg.values == vec![0.0, 0.0]);
        assert!(s3_maxdist(&run, &cell, None).unwrap().empty);
    }

    proptest! {
        #[test]
        fn heap_topk_equals_sort(scores in proptest::collection::vec(0u8..6, 1..60), k in 1usize..70) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            prop_assert_eq!(top_k_indices(&scores, k), full_sort_oracle(&scores, k));
        }
    }
}

use std::cmp::Ordering;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::cells::{partition_of, Correctness, QueryCell};
use super::metrics::{cosine_distance, js_distance, precision_at_k};
use super::sets::{row_argmax, AvgVector, LayerAccumulator, MaxDist, RankBy, TopK};
use super::{QueryError, QuerySet};
use crate::artifact::RunArtifacts;
use crate::par::{self, Execution};
use crate::samplers::{Sample, TimedSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub rank_by: RankBy,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![10],
            rank_by: RankBy::Mean,
            execution: Execution::default(),
        }
    }
}

/// A sample's item ids plus the labels it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub strategy: String,
    pub fraction: f64,
    pub seed: u64,
    pub ids: Vec<usize>,
    pub seconds: Option<f64>,
}

impl LabeledSample {
    pub fn from_sample(sample: &Sample, seconds: Option<f64>) -> Self {
        Self {
            strategy: sample.spec.strategy.name().to_string(),
            fraction: sample.spec.fraction,
            seed: sample.spec.seed,
            ids: sample.item_ids(),
            seconds,
        }
    }
}

impl From<&TimedSample> for LabeledSample {
    fn from(t: &TimedSample) -> Self {
        LabeledSample::from_sample(&t.sample, Some(t.seconds))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScore {
    pub cell: QueryCell,
    pub query_set: QuerySet,
    /// Set for S1 only.
    pub k: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub strategy: String,
    pub fraction: f64,
    pub seed: u64,
    pub query_set: QuerySet,
    pub layer: String,
    #[serde(skip)]
    pub layer_index: usize,
    pub class: usize,
    pub correctness: Correctness,
    pub k: Option<usize>,
    pub metric_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub strategy: String,
    pub fraction: f64,
    pub query_set: QuerySet,
    pub k: Option<usize>,
    pub accuracy: f64,
    /// Cell rows averaged (cells times seeds).
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub strategy: String,
    pub fraction: f64,
    /// Mean over the samples that carried a timing.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EvalReport {
    pub cells: Vec<CellRow>,
    pub aggregates: Vec<AggregateRow>,
    pub timings: Vec<TimingRow>,
}

impl EvalReport {
    pub fn aggregate(
        &self,
        strategy: &str,
        fraction: f64,
        query_set: QuerySet,
        k: Option<usize>,
    ) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| {
                a.strategy == strategy
                    && a.fraction == fraction
                    && a.query_set == query_set
                    && a.k == k
            })
            .map(|a| a.accuracy)
    }
}

struct FullAnswers {
    topk: Vec<TopK>,
    avg: AvgVector,
    dist: MaxDist,
}

/// Full-data answers for every nonempty cell, computed once and reused for
/// each sample scored against the same run.
pub struct EvalContext<'a> {
    run: &'a RunArtifacts,
    ks: Vec<usize>,
    rank_by: RankBy,
    /// `argmax[layer][item]`
    argmax: Vec<Vec<usize>>,
    partition: Vec<usize>,
    /// `full[layer][partition]`, `None` when the cell is empty in full data.
    full: Vec<Vec<Option<FullAnswers>>>,
}

impl<'a> EvalContext<'a> {
    pub fn new(run: &'a RunArtifacts, cfg: &EvalConfig) -> Result<Self, QueryError> {
        if cfg.ks.contains(&0) {
            return Err(QueryError::InvalidK);
        }
        let mut ks = cfg.ks.clone();
        ks.sort_unstable();
        ks.dedup();
        let argmax = par::map_slice(cfg.execution, run.layers(), |layer| {
            (0..layer.rows())
                .map(|i| row_argmax(layer.row(i)))
                .collect()
        });
        let partition = run
            .items()
            .iter()
            .map(|m| partition_of(m.true_label, Correctness::of(m.correct())))
            .collect();
        let mut ctx = Self {
            run,
            ks,
            rank_by: cfg.rank_by,
            argmax,
            partition,
            full: Vec::new(),
        };
        let all: Vec<usize> = (0..run.item_count()).collect();
        ctx.full = par::map_range(cfg.execution, run.layers().len(), |layer| {
            ctx.accumulate(layer, &all)
                .into_iter()
                .map(|acc| {
                    (acc.count > 0).then(|| FullAnswers {
                        topk: ctx.ks.iter().map(|&k| acc.topk(k, ctx.rank_by)).collect(),
                        avg: acc.avg(),
                        dist: acc.maxdist(),
                    })
                })
                .collect()
        });
        Ok(ctx)
    }

    pub fn run(&self) -> &RunArtifacts {
        self.run
    }

    pub fn ks(&self) -> &[usize] {
        &self.ks
    }

    fn accumulate(&self, layer: usize, ids: &[usize]) -> Vec<LayerAccumulator> {
        let matrix = &self.run.layers()[layer];
        let mut accs = vec![LayerAccumulator::new(matrix.cols()); self.run.class_count * 2];
        for &i in ids {
            accs[self.partition[i]].add(matrix.row(i), self.argmax[layer][i]);
        }
        accs
    }

    /// Scores every cell that is nonempty in the full data. Results are in
    /// canonical order: query set, layer, class, correctness, k.
    pub fn score(&self, ids: &[usize]) -> Result<Vec<CellScore>, QueryError> {
        let n = self.run.item_count();
        if let Some(&item) = ids.iter().find(|&&i| i >= n) {
            return Err(QueryError::SampleOutOfRange {
                item,
                item_count: n,
            });
        }
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();

        let mut out = Vec::new();
        let mut per_set: [Vec<CellScore>; 3] = Default::default();
        for layer in 0..self.run.layers().len() {
            let accs = self.accumulate(layer, &ids);
            for (part, acc) in accs.iter().enumerate() {
                let Some(full) = &self.full[layer][part] else {
                    continue;
                };
                let correctness = if part % 2 == 0 {
                    Correctness::Correct
                } else {
                    Correctness::Incorrect
                };
                let cell = QueryCell::new(layer, part / 2, correctness);
                for (ki, &k) in self.ks.iter().enumerate() {
                    per_set[0].push(CellScore {
                        cell,
                        query_set: QuerySet::S1,
                        k: Some(k),
                        value: precision_at_k(&acc.topk(k, self.rank_by), &full.topk[ki]),
                    });
                }
                per_set[1].push(CellScore {
                    cell,
                    query_set: QuerySet::S2,
                    k: None,
                    value: cosine_distance(&acc.avg(), &full.avg)?,
                });
                per_set[2].push(CellScore {
                    cell,
                    query_set: QuerySet::S3,
                    k: None,
                    value: js_distance(&acc.maxdist(), &full.dist)?,
                });
            }
        }
        for set in per_set {
            out.extend(set);
        }
        Ok(out)
    }
}

fn fraction_cmp(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Scores each sample against the full data and aggregates per
/// (strategy, fraction, query set, k). Samples are scored in parallel under
/// `Execution::Parallel`; output order does not depend on it.
pub fn evaluate(
    run: &RunArtifacts,
    samples: &[LabeledSample],
    cfg: &EvalConfig,
) -> Result<EvalReport, QueryError> {
    let ctx = EvalContext::new(run, cfg)?;
    let scored = par::map_slice(cfg.execution, samples, |s| ctx.score(&s.ids));

    let mut cells = Vec::new();
    for (sample, scores) in samples.iter().zip(scored) {
        for s in scores? {
            cells.push(CellRow {
                strategy: sample.strategy.clone(),
                fraction: sample.fraction,
                seed: sample.seed,
                query_set: s.query_set,
                layer: run.layers()[s.cell.layer].layer_name.clone(),
                layer_index: s.cell.layer,
                class: s.cell.class_label,
                correctness: s.cell.correctness,
                k: s.k,
                metric_value: s.value,
            });
        }
    }
    cells.sort_by(|a, b| {
        a.strategy
            .cmp(&b.strategy)
            .then(fraction_cmp(a.fraction, b.fraction))
            .then(a.seed.cmp(&b.seed))
            .then(a.query_set.cmp(&b.query_set))
            .then(a.layer_index.cmp(&b.layer_index))
            .then(a.class.cmp(&b.class))
            .then(a.correctness.cmp(&b.correctness))
            .then(a.k.cmp(&b.k))
    });

    let mut keyed: Vec<&CellRow> = cells.iter().collect();
    keyed.sort_by(|a, b| {
        a.strategy
            .cmp(&b.strategy)
            .then(fraction_cmp(a.fraction, b.fraction))
            .then(a.query_set.cmp(&b.query_set))
            .then(a.k.cmp(&b.k))
    });
    let mut aggregates: Vec<AggregateRow> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for row in keyed {
        match aggregates.last_mut() {
            Some(a)
                if a.strategy == row.strategy
                    && a.fraction == row.fraction
                    && a.query_set == row.query_set
                    && a.k == row.k =>
            {
                a.cells += 1;
                *sums.last_mut().unwrap() += row.metric_value;
            }
            _ => {
                aggregates.push(AggregateRow {
                    strategy: row.strategy.clone(),
                    fraction: row.fraction,
                    query_set: row.query_set,
                    k: row.k,
                    accuracy: 0.0,
                    cells: 1,
                });
                sums.push(row.metric_value);
            }
        }
    }
    for (a, s) in aggregates.iter_mut().zip(sums) {
        a.accuracy = s / a.cells as f64;
    }

    let mut timed: Vec<&LabeledSample> = samples.iter().filter(|s| s.seconds.is_some()).collect();
    timed.sort_by(|a, b| {
        a.strategy
            .cmp(&b.strategy)
            .then(fraction_cmp(a.fraction, b.fraction))
    });
    let mut timings: Vec<(TimingRow, usize)> = Vec::new();
    for s in timed {
        let secs = s.seconds.unwrap_or_default();
        match timings.last_mut() {
            Some((t, n)) if t.strategy == s.strategy && t.fraction == s.fraction => {
                t.seconds += secs;
                *n += 1;
            }
            _ => timings.push((
                TimingRow {
                    strategy: s.strategy.clone(),
                    fraction: s.fraction,
                    seconds: secs,
                },
                1,
            )),
        }
    }
    let timings = timings
        .into_iter()
        .map(|(mut t, n)| {
            t.seconds /= n as f64;
            t
        })
        .collect();

    Ok(EvalReport {
        cells,
        aggregates,
        timings,
    })
}

fn opt_k(k: Option<usize>) -> String {
    k.map(|k| k.to_string()).unwrap_or_default()
}

pub fn write_cells_csv<W: Write>(mut w: W, rows: &[CellRow]) -> io::Result<()> {
    writeln!(
        w,
        "strategy,fraction,seed,query_set,layer,class,correctness,k,metric_value"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.fraction,
            r.seed,
            r.query_set,
            r.layer,
            r.class,
            r.correctness,
            opt_k(r.k),
            r.metric_value
        )?;
    }
    w.flush()
}

pub fn write_aggregate_csv<W: Write>(mut w: W, rows: &[AggregateRow]) -> io::Result<()> {
    writeln!(w, "strategy,fraction,query_set,k,accuracy")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.strategy,
            r.fraction,
            r.query_set,
            opt_k(r.k),
            r.accuracy
        )?;
    }
    w.flush()
}

pub fn write_timing_csv<W: Write>(mut w: W, rows: &[TimingRow]) -> io::Result<()> {
    writeln!(w, "strategy,fraction,seconds")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.strategy, r.fraction, r.seconds)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{ActivationMatrix, ItemMeta};
    use crate::query::{s1_topk, s2_avg, s3_maxdist};
    use crate::samplers::{SampleSpec, Strategy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_run(seed: u64, n: usize) -> RunArtifacts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = |rng: &mut ChaCha8Rng, name: &str, d: usize| {
            let v = (0..n * d)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        rng.random_range(0.0f32..3.0)
                    }
                })
                .collect();
            ActivationMatrix::new(name, n, d, v).unwrap()
        };
        let layers = vec![layer(&mut rng, "a", 12), layer(&mut rng, "z", 3)];
        let items = (0..n)
            .map(|i| {
                let t = i % 3;
                let p = if rng.random_bool(0.2) { (t + 1) % 3 } else { t };
                ItemMeta {
                    true_label: t,
                    predicted_label: p,
                }
            })
            .collect();
        RunArtifacts::new("r", 3, layers, items, "z").unwrap()
    }

    fn labeled(strategy: &str, seed: u64, ids: Vec<usize>) -> LabeledSample {
        LabeledSample {
            strategy: strategy.into(),
            fraction: 0.5,
            seed,
            ids,
            seconds: Some(0.25),
        }
    }

    #[test]
    fn full_data_sample_coincides() {
        let run = random_run(1, 90);
        let cfg = EvalConfig {
            ks: vec![1, 5, 12, 40],
            ..Default::default()
        };
        let all = labeled("uniform", 0, (0..90).collect());
        let report = evaluate(&run, &[all], &cfg).unwrap();
        for a in &report.aggregates {
            let want = if a.query_set == QuerySet::S1 {
                1.0
            } else {
                0.0
            };
            assert!((a.accuracy - want).abs() < 1e-12, "{a:?}");
        }
        assert_eq!(report.aggregates.len(), 4 + 2);
    }

    #[test]
    fn scores_match_single_cell_operations() {
        let run = random_run(2, 120);
        let cfg = EvalConfig {
            ks: vec![4],
            ..Default::default()
        };
        let ctx = EvalContext::new(&run, &cfg).unwrap();
        let ids: Vec<usize> = (0..120).filter(|i| i % 4 == 1).collect();
        let sample = Sample::from_ids(
            SampleSpec::new(Strategy::Uniform, 0.25, 0),
            ids.iter().copied(),
        );
        for s in ctx.score(&ids).unwrap() {
            let c = &s.cell;
            let want = match s.query_set {
                QuerySet::S1 => precision_at_k(
                    &s1_topk(&run, c, 4, Some(&sample), RankBy::Mean).unwrap(),
                    &s1_topk(&run, c, 4, None, RankBy::Mean).unwrap(),
                ),
                QuerySet::S2 => cosine_distance(
                    &s2_avg(&run, c, Some(&sample)).unwrap(),
                    &s2_avg(&run, c, None).unwrap(),
                )
                .unwrap(),
                QuerySet::S3 => js_distance(
                    &s3_maxdist(&run, c, Some(&sample)).unwrap(),
                    &s3_maxdist(&run, c, None).unwrap(),
                )
                .unwrap(),
            };
            assert_eq!(s.value, want, "{s:?}");
        }
    }

    #[test]
    fn missing_incorrect_items_use_empty_cell_convention() {
        let run = random_run(3, 60);
        let ids: Vec<usize> = (0..60).filter(|&i| run.items()[i].correct()).collect();
        let ctx = EvalContext::new(&run, &EvalConfig::default()).unwrap();
        let scores = ctx.score(&ids).unwrap();
        let incorrect: Vec<_> = scores
            .iter()
            .filter(|s| s.cell.correctness == Correctness::Incorrect)
            .collect();
        assert!(!incorrect.is_empty());
        for s in incorrect {
            let want = if s.query_set == QuerySet::S1 {
                0.0
            } else {
                1.0
            };
            assert_eq!(s.value, want);
        }
    }

    #[test]
    fn cells_empty_in_full_data_are_excluded() {
        let layer =
            ActivationMatrix::new("l", 4, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 2.0]).unwrap();
        let items = (0..4)
            .map(|i| ItemMeta {
                true_label: i % 2,
                predicted_label: i % 2,
            })
            .collect();
        let run = RunArtifacts::new("p", 2, vec![layer], items, "l").unwrap();
        let report = evaluate(
            &run,
            &[labeled("uniform", 0, vec![0, 1])],
            &EvalConfig::default(),
        )
        .unwrap();
        assert!(report
            .cells
            .iter()
            .all(|r| r.correctness == Correctness::Correct));
        // 2 classes times 3 query sets
        assert_eq!(report.cells.len(), 6);
    }

    #[test]
    fn aggregate_is_cell_mean_and_rows_are_canonical() {
        let run = random_run(4, 150);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut samples = Vec::new();
        for seed in [3, 1, 2] {
            for strategy in ["b", "a"] {
                let ids = (0..150).filter(|_| rng.random_bool(0.2)).collect();
                samples.push(labeled(strategy, seed, ids));
            }
        }
        let cfg = EvalConfig {
            ks: vec![2, 6],
            ..Default::default()
        };
        let report = evaluate(&run, &samples, &cfg).unwrap();
        for a in &report.aggregates {
            let vals: Vec<f64> = report
                .cells
                .iter()
                .filter(|c| c.strategy == a.strategy && c.query_set == a.query_set && c.k == a.k)
                .map(|c| c.metric_value)
                .collect();
            assert_eq!(vals.len(), a.cells);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - a.accuracy).abs() < 1e-12);
        }
        assert_eq!(report.cells[0].strategy, "a");
        assert_eq!(report.cells[0].seed, 1);
        assert_eq!(report.timings.len(), 2);
        assert_eq!(report.timings[0].seconds, 0.25);

        let again = evaluate(&run, &samples, &cfg).unwrap();
        assert_eq!(report, again);
        let seq = evaluate(
            &run,
            &samples,
            &EvalConfig {
                execution: Execution::Sequential,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(report, seq);
    }

    #[test]
    fn csv_layout() {
        let run = random_run(5, 30);
        let report = evaluate(
            &run,
            &[labeled("uniform", 7, (0..30).collect())],
            &EvalConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_cells_csv(&mut buf, &report.cells).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("strategy,fraction,seed,query_set,layer,class,correctness,k,metric_value")
        );
        assert_eq!(lines.next(), Some("uniform,0.5,7,S1,a,0,correct,10,1"));
        assert!(text.contains("uniform,0.5,7,S2,a,0,correct,,0\n"));

        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &report.aggregates).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "strategy,fraction,query_set,k,accuracy\nuniform,0.5,S1,10,1\nuniform,0.5,S2,,0\nuniform,0.5,S3,,0\n"
        );
    }

    #[test]
    fn out_of_range_sample() {
        let run = random_run(6, 10);
        let err = evaluate(&run, &[labeled("u", 0, vec![10])], &EvalConfig::default()).unwrap_err();
        assert_eq!(
            err,
            QueryError::SampleOutOfRange {
                item: 10,
                item_count: 10
            }
        );
    }
}

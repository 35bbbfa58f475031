//! Parameter sweeps over strategies, fractions, seeds and the tuning
//! factor, reported as one tidy table.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::artifact::RunArtifacts;
use crate::latent::{LatentConfig, MembershipTable};
use crate::par::{self, Execution};
use crate::query::{evaluate, EvalConfig, LabeledSample, QueryError, QuerySet, RankBy};
use crate::samplers::{draw, fit_memberships, ModelKind, SampleError, SampleSpec, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("invalid sweep: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub strategies: Vec<Strategy>,
    pub fractions: Vec<f64>,
    pub seeds: u64,
    /// Seeds for the weighted strategy, which is noisier than the others.
    pub weighted_seeds: u64,
    pub ks: Vec<usize>,
    pub tuning: f64,
    pub j_values: Vec<f64>,
    pub j_fraction: f64,
    pub j_k: usize,
    pub rank_by: RankBy,
    pub latent: LatentConfig,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            fractions: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            seeds: 10,
            weighted_seeds: 10,
            ks: vec![10, 25, 50, 100],
            tuning: crate::samplers::DEFAULT_TUNING,
            j_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            j_fraction: 0.05,
            j_k: 10,
            rank_by: RankBy::Mean,
            latent: LatentConfig::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Accuracy against sample fraction at fixed `j`.
    Fraction,
    /// Accuracy against `j` at a fixed fraction, clustered strategies only.
    Tuning,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fraction => "fraction",
            Experiment::Tuning => "tuning",
        }
    }
}

/// One (experiment, strategy, fraction, j, query set, k) group, averaged
/// over cells and seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub experiment: Experiment,
    pub strategy: Strategy,
    /// Requested fraction; for eb_tree the mean realized fraction.
    pub fraction: f64,
    /// Set for clustered strategies.
    pub tuning: Option<f64>,
    pub query_set: QuerySet,
    pub k: Option<usize>,
    pub accuracy: f64,
    pub seeds: u64,
    pub mean_size: f64,
    pub mean_misclassified: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub item_count: usize,
    pub misclassified: usize,
    pub total_seconds: f64,
}

struct Drawn {
    spec: SampleSpec,
    ids: Vec<usize>,
    seconds: f64,
}

fn validate(cfg: &SweepConfig) -> Result<(), SweepError> {
    let bad = |m: String| Err(SweepError::Invalid(m));
    if cfg.strategies.is_empty() {
        return bad("no strategies".into());
    }
    if cfg.seeds == 0 || cfg.weighted_seeds == 0 {
        return bad("seed counts must be >= 1".into());
    }
    if cfg.ks.is_empty() || cfg.ks.contains(&0) || cfg.j_k == 0 {
        return bad("k values must be >= 1".into());
    }
    for &f in cfg.fractions.iter().chain([&cfg.j_fraction]) {
        if !(f > 0.0 && f <= 1.0) {
            return bad(format!("fraction {f} outside (0, 1]"));
        }
    }
    for &j in cfg.j_values.iter().chain([&cfg.tuning]) {
        if !(0.0..=1.0).contains(&j) {
            return bad(format!("tuning factor {j} outside [0, 1]"));
        }
    }
    Ok(())
}

/// Fits every latent model the specs need (once per model and seed), then
/// draws all samples. Each sample's time includes its model's fit time.
fn draw_all(
    run: &RunArtifacts,
    specs: &[SampleSpec],
    cfg: &SweepConfig,
) -> Result<Vec<Drawn>, SweepError> {
    let mut fits: Vec<(ModelKind, u64)> = specs
        .iter()
        .filter_map(|s| s.strategy.model_kind(s.weighted_basis).map(|k| (k, s.seed)))
        .collect();
    fits.sort_by_key(|&(k, s)| (k.name(), s));
    fits.dedup();
    let fitted = par::map_slice(cfg.execution, &fits, |&(kind, seed)| {
        let start = Instant::now();
        let table = fit_memberships(run, kind, seed, &cfg.latent)?;
        Ok::<_, SampleError>((Arc::new(table), start.elapsed().as_secs_f64()))
    });
    let mut tables: HashMap<(ModelKind, u64), (Arc<MembershipTable>, f64)> = HashMap::new();
    for (key, fit) in fits.into_iter().zip(fitted) {
        tables.insert(key, fit?);
    }

    par::map_slice(cfg.execution, specs, |spec| {
        let (table, fit_seconds) = match spec.strategy.model_kind(spec.weighted_basis) {
            Some(kind) => {
                let (t, s) = &tables[&(kind, spec.seed)];
                (Some(t.as_ref()), *s)
            }
            None => (None, 0.0),
        };
        let start = Instant::now();
        let (sample, _) = draw(run, spec, table)?;
        Ok(Drawn {
            spec: sample.spec,
            ids: sample.item_ids(),
            seconds: start.elapsed().as_secs_f64() + fit_seconds,
        })
    })
    .into_iter()
    .collect()
}

fn seeds_for(strategy: Strategy, cfg: &SweepConfig) -> u64 {
    if strategy == Strategy::Weighted {
        cfg.weighted_seeds
    } else {
        cfg.seeds
    }
}

/// Groups drawn samples by (strategy, requested fraction) and scores them.
fn score_groups(
    run: &RunArtifacts,
    experiment: Experiment,
    drawn: &[Drawn],
    requested: &[f64],
    ks: &[usize],
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>, SweepError> {
    let labeled: Vec<LabeledSample> = drawn
        .iter()
        .zip(requested)
        .map(|(d, &fraction)| LabeledSample {
            strategy: d.spec.strategy.name().to_string(),
            fraction,
            seed: d.spec.seed,
            ids: d.ids.clone(),
            seconds: Some(d.seconds),
        })
        .collect();
    let eval_cfg = EvalConfig {
        ks: ks.to_vec(),
        rank_by: cfg.rank_by,
        execution: cfg.execution,
    };
    let report = evaluate(run, &labeled, &eval_cfg)?;

    let mut rows = Vec::new();
    for agg in &report.aggregates {
        let members: Vec<(&Drawn, &LabeledSample)> = drawn
            .iter()
            .zip(&labeled)
            .filter(|(_, l)| l.strategy == agg.strategy && l.fraction == agg.fraction)
            .collect();
        let n = members.len() as f64;
        let spec = members[0].0.spec;
        let mean = |f: &dyn Fn(&Drawn) -> f64| members.iter().map(|(d, _)| f(d)).sum::<f64>() / n;
        let mean_size = mean(&|d| d.ids.len() as f64);
        rows.push(SweepRow {
            experiment,
            strategy: spec.strategy,
            fraction: if spec.strategy.fraction_controlled() {
                agg.fraction
            } else {
                mean_size / run.item_count() as f64
            },
            tuning: spec.strategy.is_clustered().then_some(spec.tuning),
            query_set: agg.query_set,
            k: agg.k,
            accuracy: agg.accuracy,
            seeds: members.len() as u64,
            mean_size,
            mean_misclassified: mean(&|d| run.misclassified_count(&d.ids) as f64),
            mean_seconds: mean(&|d| d.seconds),
        });
    }
    Ok(rows)
}

pub fn run_sweep(run: &RunArtifacts, cfg: &SweepConfig) -> Result<SweepReport, SweepError> {
    validate(cfg)?;
    let start = Instant::now();
    let spec_for = |strategy, fraction, seed, tuning| {
        SampleSpec::new(strategy, fraction, seed).with_tuning(tuning)
    };

    // fraction experiment; eb_tree has no size knob so it runs once per seed
    let mut specs = Vec::new();
    let mut requested = Vec::new();
    for &strategy in &cfg.strategies {
        let fractions: &[f64] = if strategy.fraction_controlled() {
            &cfg.fractions
        } else {
            &[1.0]
        };
        for &fraction in fractions {
            for seed in 0..seeds_for(strategy, cfg) {
                specs.push(spec_for(strategy, fraction, seed, cfg.tuning));
                requested.push(fraction);
            }
        }
    }
    let drawn = draw_all(run, &specs, cfg)?;
    let mut rows = score_groups(run, Experiment::Fraction, &drawn, &requested, &cfg.ks, cfg)?;

    let clustered: Vec<Strategy> = cfg
        .strategies
        .iter()
        .copied()
        .filter(|s| s.is_clustered())
        .collect();
    for &j in &cfg.j_values {
        if clustered.is_empty() {
            break;
        }
        let specs: Vec<SampleSpec> = clustered
            .iter()
            .flat_map(|&s| (0..cfg.seeds).map(move |seed| (s, seed)))
            .map(|(s, seed)| spec_for(s, cfg.j_fraction, seed, j))
            .collect();
        let requested = vec![cfg.j_fraction; specs.len()];
        let drawn = draw_all(run, &specs, cfg)?;
        rows.extend(score_groups(
            run,
            Experiment::Tuning,
            &drawn,
            &requested,
            &[cfg.j_k],
            cfg,
        )?);
    }

    rows.sort_by(|a, b| {
        (a.experiment as u8)
            .cmp(&(b.experiment as u8))
            .then(a.strategy.cmp(&b.strategy))
            .then(a.fraction.total_cmp(&b.fraction))
            .then(
                a.tuning
                    .unwrap_or(-1.0)
                    .total_cmp(&b.tuning.unwrap_or(-1.0)),
            )
            .then(a.query_set.cmp(&b.query_set))
            .then(a.k.cmp(&b.k))
    });
    Ok(SweepReport {
        rows,
        item_count: run.item_count(),
        misclassified: (0..run.item_count())
            .filter(|&i| !run.items()[i].correct())
            .count(),
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "experiment,strategy,fraction,j,query_set,k,accuracy,seeds,mean_size,mean_misclassified,mean_seconds"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.experiment.name(),
                r.strategy,
                r.fraction,
                r.tuning.map(|j| j.to_string()).unwrap_or_default(),
                r.query_set,
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                r.accuracy,
                r.seeds,
                r.mean_size,
                r.mean_misclassified,
                r.mean_seconds
            )?;
        }
        w.flush()
    }

    /// Mean creation time per strategy at its smallest swept fraction,
    /// fastest first.
    pub fn timing_table(&self) -> Vec<(Strategy, f64, f64)> {
        let mut best: Vec<(Strategy, f64, f64)> = Vec::new();
        for r in self
            .rows
            .iter()
            .filter(|r| r.experiment == Experiment::Fraction)
        {
            match best.iter_mut().find(|(s, _, _)| *s == r.strategy) {
                Some(entry) if r.fraction < entry.1 => {
                    *entry = (r.strategy, r.fraction, r.mean_seconds)
                }
                Some(_) => {}
                None => best.push((r.strategy, r.fraction, r.mean_seconds)),
            }
        }
        best.sort_by(|a, b| a.2.total_cmp(&b.2));
        best
    }

    /// Plain-text tables: accuracy by fraction, accuracy by `j`, timings.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "run: {} items, {} misclassified; sweep took {:.1}s",
            self.item_count, self.misclassified, self.total_seconds
        );
        let fraction_rows: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.experiment == Experiment::Fraction)
            .collect();
        let mut fractions: Vec<f64> = fraction_rows
            .iter()
            .filter(|r| r.strategy.fraction_controlled())
            .map(|r| r.fraction)
            .collect();
        fractions.sort_by(f64::total_cmp);
        fractions.dedup();
        let mut strategies: Vec<Strategy> = fraction_rows.iter().map(|r| r.strategy).collect();
        strategies.dedup();
        let mut keys: Vec<(QuerySet, Option<usize>)> =
            fraction_rows.iter().map(|r| (r.query_set, r.k)).collect();
        keys.sort();
        keys.dedup();

        for (qs, k) in keys {
            let title = match k {
                Some(k) => format!("{qs} (k={k})"),
                None => qs.to_string(),
            };
            let _ = write!(out, "\n{title:<16}");
            for f in &fractions {
                let _ = write!(out, "{:>9}", f);
            }
            let _ = writeln!(out);
            for s in &strategies {
                let _ = write!(out, "{:<16}", s.name());
                let cells: Vec<&&SweepRow> = fraction_rows
                    .iter()
                    .filter(|r| r.strategy == *s && r.query_set == qs && r.k == k)
                    .collect();
                if s.fraction_controlled() {
                    for f in &fractions {
                        match cells.iter().find(|r| r.fraction == *f) {
                            Some(r) => write!(out, "{:>9.4}", r.accuracy),
                            None => write!(out, "{:>9}", "-"),
                        }
                        .ok();
                    }
                } else if let Some(r) = cells.first() {
                    let _ = write!(out, "{:>9.4}  (fraction {:.4})", r.accuracy, r.fraction);
                }
                let _ = writeln!(out);
            }
        }

        let tuning: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.experiment == Experiment::Tuning)
            .collect();
        if let Some(first) = tuning.first() {
            let mut js: Vec<f64> = tuning.iter().filter_map(|r| r.tuning).collect();
            js.sort_by(f64::total_cmp);
            js.dedup();
            let _ = writeln!(out, "\ntuning factor sweep at fraction {}", first.fraction);
            let _ = write!(out, "{:<24}", "");
            for j in &js {
                let _ = write!(out, "{:>9}", format!("j={j}"));
            }
            let _ = writeln!(out);
            let mut groups: Vec<(Strategy, QuerySet, Option<usize>)> = tuning
                .iter()
                .map(|r| (r.strategy, r.query_set, r.k))
                .collect();
            groups.dedup();
            for (s, qs, k) in groups {
                let label = format!("{} {}", s.name(), qs);
                let _ = write!(out, "{label:<24}");
                for j in &js {
                    if let Some(r) = tuning.iter().find(|r| {
                        r.strategy == s && r.query_set == qs && r.k == k && r.tuning == Some(*j)
                    }) {
                        let _ = write!(out, "{:>9.4}", r.accuracy);
                    }
                }
                let _ = writeln!(out);
            }
            let _ = write!(out, "{:<24}", "misclassified sampled");
            let _ = writeln!(out);
            let mut strategies: Vec<Strategy> = tuning.iter().map(|r| r.strategy).collect();
            strategies.dedup();
            for s in strategies {
                let _ = write!(out, "  {:<22}", s.name());
                for j in &js {
                    if let Some(r) = tuning
                        .iter()
                        .find(|r| r.strategy == s && r.tuning == Some(*j))
                    {
                        let _ = write!(out, "{:>9.2}", r.mean_misclassified);
                    }
                }
                let _ = writeln!(out);
            }
        }

        let _ = writeln!(out, "\ncreation time (mean seconds, fastest first)");
        for (s, f, secs) in self.timing_table() {
            let _ = writeln!(out, "{:<16}{:>12.6}  at fraction {:.4}", s.name(), secs, f);
        }
        out
    }
}

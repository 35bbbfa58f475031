//! Sampling strategies.
//!
//! Every strategy is a pure function of the run, any fitted latent model and
//! the [`SampleSpec`]; a fixed seed always reproduces the same sample.

mod basic;
mod clustered;
mod ebtree;
mod grid;
mod io;
mod vas;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use basic::{stratified_cm_sample, uniform_sample};
pub use clustered::{clustered_sample, weighted_sample};
pub use ebtree::{ebtree_sample, BoundaryNode, BoundaryTree};
pub use grid::latent_grid_sample;
pub use io::{read_sample_csv, write_sample_csv, SampleMeta};
pub use vas::{kernel_loss, vas_sample, vas_sample_traced, VasTrace};

use crate::artifact::RunArtifacts;
use crate::latent::{self, CovarianceMode, LatentConfig, MembershipTable, ModelError};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("tuning factor {0} outside [0, 1]")]
    InvalidTuning(f64),
    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
    #[error("invalid sample parameters: {0}")]
    InvalidParameter(String),
    #[error("membership table covers {found} items, run has {expected}")]
    MembershipMismatch { expected: usize, found: usize },
    #[error("sample file: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    StratifiedCm,
    LatentGrid,
    GmmFull,
    GmmSpherical,
    MaxMargin,
    Weighted,
    Vas,
    EbTree,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Uniform,
        Strategy::StratifiedCm,
        Strategy::LatentGrid,
        Strategy::GmmFull,
        Strategy::GmmSpherical,
        Strategy::MaxMargin,
        Strategy::Weighted,
        Strategy::Vas,
        Strategy::EbTree,
    ];

    pub const CLUSTERED: [Strategy; 3] = [
        Strategy::GmmFull,
        Strategy::GmmSpherical,
        Strategy::MaxMargin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::StratifiedCm => "stratified_cm",
            Strategy::LatentGrid => "latent_grid",
            Strategy::GmmFull => "gmm_full",
            Strategy::GmmSpherical => "gmm_spherical",
            Strategy::MaxMargin => "max_margin",
            Strategy::Weighted => "weighted",
            Strategy::Vas => "vas",
            Strategy::EbTree => "eb_tree",
        }
    }

    /// Head/tail selection over ratio-sorted clusters, controlled by `j`.
    pub fn is_clustered(self) -> bool {
        Strategy::CLUSTERED.contains(&self)
    }

    /// Whether the sample size follows the requested fraction.
    pub fn fraction_controlled(self) -> bool {
        self != Strategy::EbTree
    }

    /// The latent model this strategy sorts by, if any.
    pub fn model_kind(self, weighted_basis: ModelKind) -> Option<ModelKind> {
        match self {
            Strategy::GmmFull => Some(ModelKind::GmmFull),
            Strategy::GmmSpherical => Some(ModelKind::GmmSpherical),
            Strategy::MaxMargin => Some(ModelKind::MaxMargin),
            Strategy::Weighted => Some(weighted_basis),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = SampleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| SampleError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GmmFull,
    GmmSpherical,
    MaxMargin,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GmmFull => "gmm_full",
            ModelKind::GmmSpherical => "gmm_spherical",
            ModelKind::MaxMargin => "max_margin",
        }
    }
}

impl FromStr for ModelKind {
    type Err = SampleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ModelKind::GmmFull,
            ModelKind::GmmSpherical,
            ModelKind::MaxMargin,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| SampleError::InvalidParameter(format!("unknown model '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VasEpsilon {
    Auto,
    Fixed(f64),
}

impl FromStr for VasEpsilon {
    type Err = SampleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(VasEpsilon::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(VasEpsilon::Fixed(v)),
            _ => Err(SampleError::InvalidParameter(format!(
                "vas epsilon must be 'auto' or a positive number, got '{s}'"
            ))),
        }
    }
}

pub const DEFAULT_TUNING: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub strategy: Strategy,
    pub fraction: f64,
    /// Share of each cluster's budget taken from the outlier end.
    pub tuning: f64,
    pub seed: u64,
    pub grid_dims: usize,
    pub grid_bins: usize,
    pub vas_epsilon: VasEpsilon,
    /// Model whose likelihood ratios drive the weighted strategy.
    pub weighted_basis: ModelKind,
}

impl SampleSpec {
    pub fn new(strategy: Strategy, fraction: f64, seed: u64) -> Self {
        Self {
            strategy,
            fraction,
            tuning: DEFAULT_TUNING,
            seed,
            grid_dims: 5,
            grid_bins: 2,
            vas_epsilon: VasEpsilon::Auto,
            weighted_basis: ModelKind::MaxMargin,
        }
    }

    pub fn with_tuning(mut self, tuning: f64) -> Self {
        self.tuning = tuning;
        self
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(SampleError::InvalidFraction(self.fraction));
        }
        if !(0.0..=1.0).contains(&self.tuning) {
            return Err(SampleError::InvalidTuning(self.tuning));
        }
        if self.grid_dims == 0 || self.grid_bins == 0 {
            return Err(SampleError::InvalidParameter(
                "grid dims and bins must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Head,
    Tail,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl End {
    pub fn as_str(self) -> &'static str {
        match self {
            End::Head => "head",
            End::Tail => "tail",
            End::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleEntry {
    pub item_id: usize,
    /// Cluster, class or stratum the item was drawn from.
    pub cluster: Option<usize>,
    pub end: End,
}

/// Per-cluster accounting for head/tail strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterTake {
    pub cluster: usize,
    pub size: usize,
    pub budget: usize,
    pub head: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub spec: SampleSpec,
    /// Sorted by item id, no duplicates.
    pub entries: Vec<SampleEntry>,
    pub clusters: Vec<ClusterTake>,
}

impl Sample {
    pub(crate) fn from_entries(
        spec: SampleSpec,
        mut entries: Vec<SampleEntry>,
        clusters: Vec<ClusterTake>,
    ) -> Self {
        entries.sort_by_key(|e| e.item_id);
        debug_assert!(entries.windows(2).all(|w| w[0].item_id < w[1].item_id));
        Self {
            spec,
            entries,
            clusters,
        }
    }

    pub fn from_ids(spec: SampleSpec, ids: impl IntoIterator<Item = usize>) -> Self {
        let entries = ids
            .into_iter()
            .map(|item_id| SampleEntry {
                item_id,
                cluster: None,
                end: End::NotApplicable,
            })
            .collect();
        Self::from_entries(spec, entries, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn item_ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.item_id).collect()
    }

    /// Membership mask over `item_count` items.
    pub fn mask(&self, item_count: usize) -> Vec<bool> {
        let mut mask = vec![false; item_count];
        for e in &self.entries {
            mask[e.item_id] = true;
        }
        mask
    }
}

/// `floor(f * n)`, tolerant of representation error in `f`.
pub(crate) fn floor_count(f: f64, n: usize) -> usize {
    (((f * n as f64) + 1e-9).floor() as usize).min(n)
}

/// `round(f * n)`, halves away from zero.
pub(crate) fn round_count(f: f64, n: usize) -> usize {
    ((f * n as f64).round() as usize).min(n)
}

/// A sample together with its creation wall time.
#[derive(Debug, Clone)]
pub struct TimedSample {
    pub sample: Sample,
    pub tree: Option<BoundaryTree>,
    /// Sampling time plus, for model-driven strategies, the model fit time.
    pub seconds: f64,
}

struct FittedMemberships {
    table: Arc<MembershipTable>,
    fit_seconds: f64,
}

/// Draws samples for one run, fitting and caching latent models on demand.
pub struct Sampler<'a> {
    run: &'a RunArtifacts,
    cfg: LatentConfig,
    cache: HashMap<(ModelKind, u64), FittedMemberships>,
}

impl<'a> Sampler<'a> {
    pub fn new(run: &'a RunArtifacts, cfg: LatentConfig) -> Self {
        Self {
            run,
            cfg,
            cache: HashMap::new(),
        }
    }

    pub fn run(&self) -> &RunArtifacts {
        self.run
    }

    /// Fits (or reuses) the model for `kind` with `seed`.
    pub fn memberships(
        &mut self,
        kind: ModelKind,
        seed: u64,
    ) -> Result<(Arc<MembershipTable>, f64), SampleError> {
        if let Some(m) = self.cache.get(&(kind, seed)) {
            return Ok((m.table.clone(), m.fit_seconds));
        }
        let start = Instant::now();
        let table = fit_memberships(self.run, kind, seed, &self.cfg)?;
        let fit_seconds = start.elapsed().as_secs_f64();
        let table = Arc::new(table);
        self.cache.insert(
            (kind, seed),
            FittedMemberships {
                table: table.clone(),
                fit_seconds,
            },
        );
        Ok((table, fit_seconds))
    }

    pub fn sample(&mut self, spec: &SampleSpec) -> Result<TimedSample, SampleError> {
        spec.validate()?;
        let (table, fit_seconds) = match spec.strategy.model_kind(spec.weighted_basis) {
            Some(kind) => {
                let (t, s) = self.memberships(kind, spec.seed)?;
                (Some(t), s)
            }
            None => (None, 0.0),
        };
        let start = Instant::now();
        let (sample, tree) = draw(self.run, spec, table.as_deref())?;
        let seconds = start.elapsed().as_secs_f64() + fit_seconds;
        Ok(TimedSample {
            sample,
            tree,
            seconds,
        })
    }
}

pub fn fit_memberships(
    run: &RunArtifacts,
    kind: ModelKind,
    seed: u64,
    cfg: &LatentConfig,
) -> Result<MembershipTable, SampleError> {
    let latent_space = run.latent();
    let table = match kind {
        ModelKind::GmmFull | ModelKind::GmmSpherical => {
            let mode = if kind == ModelKind::GmmFull {
                CovarianceMode::Full
            } else {
                CovarianceMode::Spherical
            };
            let model = latent::gmm_fit(latent_space, run.class_count, mode, seed, cfg)?;
            latent::memberships(&model, latent_space, cfg)?
        }
        ModelKind::MaxMargin => {
            let model =
                latent::margin_fit(latent_space, &run.true_labels(), run.class_count, seed, cfg)?;
            latent::memberships(&model, latent_space, cfg)?
        }
    };
    Ok(table)
}

/// Dispatches to the strategy. Model-driven strategies need `table`.
pub fn draw(
    run: &RunArtifacts,
    spec: &SampleSpec,
    table: Option<&MembershipTable>,
) -> Result<(Sample, Option<BoundaryTree>), SampleError> {
    spec.validate()?;
    let need_table = || {
        table.ok_or_else(|| {
            SampleError::InvalidParameter(format!(
                "strategy {} needs a fitted latent model",
                spec.strategy
            ))
        })
    };
    let sample = match spec.strategy {
        Strategy::Uniform => uniform_sample(run, spec)?,
        Strategy::StratifiedCm => stratified_cm_sample(run, spec)?,
        Strategy::LatentGrid => latent_grid_sample(run, spec)?,
        Strategy::GmmFull | Strategy::GmmSpherical | Strategy::MaxMargin => {
            clustered_sample(run, need_table()?, spec)?
        }
        Strategy::Weighted => weighted_sample(run, need_table()?, spec)?,
        Strategy::Vas => vas_sample(run, spec)?,
        Strategy::EbTree => {
            let (s, tree) = ebtree_sample(run, spec)?;
            return Ok((s, Some(tree)));
        }
    };
    Ok((sample, None))
}

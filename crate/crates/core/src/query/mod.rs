//! Diagnosis query sets over (layer, class, correctness) cells and the
//! metrics that compare sample answers with full-data answers.
//!
//! * S1: top-k most activated neurons, scored by precision.
//! * S2: per-neuron average activation, scored by cosine distance.
//! * S3: distribution of each item's maximally activated neuron, scored by
//!   Jensen-Shannon distance.

mod cells;
mod eval;
mod metrics;
mod sets;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cells::{all_cells, cell_items, confusion_pair_items, Correctness, QueryCell};
pub use eval::{
    evaluate, write_aggregate_csv, write_cells_csv, write_timing_csv, AggregateRow, CellRow,
    CellScore, EvalConfig, EvalContext, EvalReport, LabeledSample, TimingRow,
};
pub use metrics::{cosine_distance, js_distance, precision_at_k};
pub use sets::{s1_topk, s2_avg, s3_maxdist, top_k_indices, AvgVector, MaxDist, RankBy, TopK};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("distribution sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("k must be >= 1")]
    InvalidK,
    #[error("layer index {0} out of range")]
    UnknownLayer(usize),
    #[error("class {class} outside [0, {class_count})")]
    UnknownClass { class: usize, class_count: usize },
    #[error("sample item {item} out of range for a run of {item_count} items")]
    SampleOutOfRange { item: usize, item_count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuerySet {
    S1,
    S2,
    S3,
}

impl QuerySet {
    pub const ALL: [QuerySet; 3] = [QuerySet::S1, QuerySet::S2, QuerySet::S3];

    pub fn name(self) -> &'static str {
        match self {
            QuerySet::S1 => "S1",
            QuerySet::S2 => "S2",
            QuerySet::S3 => "S3",
        }
    }
}

impl fmt::Display for QuerySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuerySet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuerySet::ALL
            .into_iter()
            .find(|q| q.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown query set '{s}'"))
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::QueryError;
use crate::artifact::RunArtifacts;
use crate::samplers::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correctness {
    Correct,
    Incorrect,
}

impl Correctness {
    pub fn of(correct: bool) -> Self {
        if correct {
            Correctness::Correct
        } else {
            Correctness::Incorrect
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Correctness::Correct => "correct",
            Correctness::Incorrect => "incorrect",
        }
    }
}

impl fmt::Display for Correctness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Items of one true class that the model got right (or wrong), viewed
/// through one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryCell {
    pub layer: usize,
    pub class_label: usize,
    pub correctness: Correctness,
}

impl QueryCell {
    pub fn new(layer: usize, class_label: usize, correctness: Correctness) -> Self {
        Self {
            layer,
            class_label,
            correctness,
        }
    }

    pub(crate) fn validate(&self, run: &RunArtifacts) -> Result<(), QueryError> {
        if self.layer >= run.layers().len() {
            return Err(QueryError::UnknownLayer(self.layer));
        }
        if self.class_label >= run.class_count {
            return Err(QueryError::UnknownClass {
                class: self.class_label,
                class_count: run.class_count,
            });
        }
        Ok(())
    }
}

pub(crate) fn partition_of(class: usize, correctness: Correctness) -> usize {
    class * 2 + usize::from(correctness == Correctness::Incorrect)
}

/// Every cell of the run in canonical order: layer, class, correct first.
pub fn all_cells(run: &RunArtifacts) -> Vec<QueryCell> {
    let mut cells = Vec::with_capacity(run.layers().len() * run.class_count * 2);
    for layer in 0..run.layers().len() {
        for class in 0..run.class_count {
            for c in [Correctness::Correct, Correctness::Incorrect] {
                cells.push(QueryCell::new(layer, class, c));
            }
        }
    }
    cells
}

fn restricted(
    run: &RunArtifacts,
    restrict: Option<&Sample>,
) -> Result<Option<Vec<bool>>, QueryError> {
    restrict
        .map(|s| {
            if let Some(e) = s.entries.iter().find(|e| e.item_id >= run.item_count()) {
                return Err(QueryError::SampleOutOfRange {
                    item: e.item_id,
                    item_count: run.item_count(),
                });
            }
            Ok(s.mask(run.item_count()))
        })
        .transpose()
}

/// Ascending ids of the cell's items, intersected with `restrict` if given.
pub fn cell_items(
    run: &RunArtifacts,
    cell: &QueryCell,
    restrict: Option<&Sample>,
) -> Result<Vec<usize>, QueryError> {
    cell.validate(run)?;
    let mask = restricted(run, restrict)?;
    Ok(run
        .items()
        .iter()
        .enumerate()
        .filter(|(i, m)| {
            m.true_label == cell.class_label
                && Correctness::of(m.correct()) == cell.correctness
                && mask.as_ref().is_none_or(|mask| mask[*i])
        })
        .map(|(i, _)| i)
        .collect())
}

/// Items of true class `true_label` predicted as `predicted_label`.
pub fn confusion_pair_items(
    run: &RunArtifacts,
    true_label: usize,
    predicted_label: usize,
    restrict: Option<&Sample>,
) -> Result<Vec<usize>, QueryError> {
    for class in [true_label, predicted_label] {
        if class >= run.class_count {
            return Err(QueryError::UnknownClass {
                class,
                class_count: run.class_count,
            });
        }
    }
    let mask = restricted(run, restrict)?;
    Ok(run
        .items()
        .iter()
        .enumerate()
        .filter(|(i, m)| {
            m.true_label == true_label
                && m.predicted_label == predicted_label
                && mask.as_ref().is_none_or(|mask| mask[*i])
        })
        .map(|(i, _)| i)
        .collect())
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Sample, SampleError, SampleSpec};
use crate::artifact::{squared_distance, RunArtifacts};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryNode {
    pub item_id: usize,
    pub predicted_label: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Tree over items in which every child's predicted label differs from its
/// parent's. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryTree {
    pub nodes: Vec<BoundaryNode>,
}

impl BoundaryTree {
    pub const ROOT: usize = 0;

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// First node whose label equals its parent's, if any.
    pub fn label_violation(&self) -> Option<usize> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            n.parent
                .filter(|&p| self.nodes[p].predicted_label == n.predicted_label)
                .map(|_| i)
        })
    }
}

/// Grows a boundary tree over the latent space in a seeded item order. The
/// sample is every item that became a node; its size is not fraction-driven.
pub fn ebtree_sample(
    run: &RunArtifacts,
    spec: &SampleSpec,
) -> Result<(Sample, BoundaryTree), SampleError> {
    let n = run.item_count();
    if n == 0 {
        return Err(SampleError::InvalidParameter("run has no items".into()));
    }
    let latent = run.latent();
    let items = run.items();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let mut nodes = vec![BoundaryNode {
        item_id: order[0],
        predicted_label: items[order[0]].predicted_label,
        parent: None,
        children: Vec::new(),
    }];
    for &x in &order[1..] {
        let xr = latent.row(x);
        let mut current = BoundaryTree::ROOT;
        loop {
            let mut best = current;
            let mut best_d = squared_distance(xr, latent.row(nodes[current].item_id));
            for &c in &nodes[current].children {
                let d = squared_distance(xr, latent.row(nodes[c].item_id));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if best == current {
                break;
            }
            current = best;
        }
        let label = items[x].predicted_label;
        if label != nodes[current].predicted_label {
            let id = nodes.len();
            nodes.push(BoundaryNode {
                item_id: x,
                predicted_label: label,
                parent: Some(current),
                children: Vec::new(),
            });
            nodes[current].children.push(id);
        }
    }

    let tree = BoundaryTree { nodes };
    let mut spec = *spec;
    spec.fraction = tree.len() as f64 / n as f64;
    let sample = Sample::from_ids(spec, tree.nodes.iter().map(|n| n.item_id));
    Ok((sample, tree))
}

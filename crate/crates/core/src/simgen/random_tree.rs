use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Number of standard-normal reference points used to place thresholds.
pub const REFERENCE_SAMPLES: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RandomTreeNode {
    Leaf { level: f64 },
    Split { covariate: usize, threshold: f64, left: usize, right: usize },
}

/// Piecewise-constant function grown by random axis-aligned splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomTreeF0 {
    pub nodes: Vec<RandomTreeNode>,
}

impl RandomTreeF0 {
    /// Grows a tree with `leaves` leaves over `p` covariates.
    ///
    /// Each step picks a leaf uniformly among those holding at least two
    /// reference points, a covariate uniformly, and a threshold uniformly
    /// between the smallest and largest reference value of that covariate in
    /// the leaf. Leaf levels are standard normal.
    pub fn random<R: Rng + ?Sized>(p: usize, leaves: usize, rng: &mut R) -> Self {
        let leaves = leaves.max(1);
        let reference = DMatrix::from_fn(REFERENCE_SAMPLES, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut nodes = vec![RandomTreeNode::Leaf { level: 0.0 }];
        let mut members: Vec<Vec<usize>> = vec![(0..REFERENCE_SAMPLES).collect()];
        let mut open: Vec<usize> = vec![0];
        while open.len() < leaves {
            let splittable: Vec<usize> = (0..open.len()).filter(|&k| members[open[k]].len() >= 2).collect();
            if splittable.is_empty() {
                break;
            }
            let slot = splittable[rng.random_range(0..splittable.len())];
            let node = open[slot];
            let covariate = rng.random_range(0..p);
            let values: Vec<f64> = members[node].iter().map(|&i| reference[(i, covariate)]).collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let threshold = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let (left, right) = (nodes.len(), nodes.len() + 1);
            let (l, r): (Vec<usize>, Vec<usize>) =
                members[node].iter().partition(|&&i| reference[(i, covariate)] <= threshold);
            nodes[node] = RandomTreeNode::Split { covariate, threshold, left, right };
            nodes.push(RandomTreeNode::Leaf { level: 0.0 });
            nodes.push(RandomTreeNode::Leaf { level: 0.0 });
            members.push(l);
            members.push(r);
            open[slot] = left;
            open.push(right);
        }
        for node in nodes.iter_mut() {
            if let RandomTreeNode::Leaf { level } = node {
                *level = rng.sample(StandardNormal);
            }
        }
        RandomTreeF0 { nodes }
    }

    pub fn eval_row(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                RandomTreeNode::Leaf { level } => return level,
                RandomTreeNode::Split { covariate, threshold, left, right } => {
                    id = if row[covariate] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, RandomTreeNode::Leaf { .. })).count()
    }

    /// Covariates used by at least one split, ascending.
    pub fn parents(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                RandomTreeNode::Split { covariate, .. } => Some(*covariate),
                RandomTreeNode::Leaf { .. } => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

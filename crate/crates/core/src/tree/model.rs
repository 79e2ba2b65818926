use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SpectralTransform, TransformKind};
use crate::tree::state::min_norm_solve;
use crate::tree::Variant;

/// Version tag written into serialized trees and forests.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeKind {
    Leaf {
        value: f64,
    },
    Split {
        covariate: usize,
        threshold: f64,
        /// Realized decrease of the spectral loss when the split was accepted.
        loss_decrease: f64,
        /// Zero-based position of the split in the growing sequence.
        order: usize,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    /// Training samples (with bootstrap multiplicity) that reached the node.
    pub n_samples: usize,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMetadata {
    pub n_features: usize,
    pub n_train: usize,
    pub cp: f64,
    pub max_splits: Option<usize>,
    pub mtry: usize,
    pub min_leaf: usize,
    pub max_candidates: usize,
    pub variant: Variant,
    pub transform: TransformKind,
    pub seed: Option<u64>,
    pub initial_loss: f64,
    /// Training spectral loss of the partition, when known exactly.
    pub final_loss: Option<f64>,
    /// Set when leaf levels were merged during pruning instead of refitted.
    #[serde(default)]
    pub approximate_levels: bool,
}

/// A fitted spectrally deconfounded regression tree.
///
/// Nodes are stored in creation order; node 0 is the root and children always
/// come after their parent. Rows with `x[covariate] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdTree {
    pub version: u32,
    pub metadata: TreeMetadata,
    pub nodes: Vec<Node>,
}

impl SdTree {
    pub(crate) fn single_leaf(metadata: TreeMetadata, value: f64, n_samples: usize) -> Self {
        SdTree {
            version: MODEL_FORMAT_VERSION,
            metadata,
            nodes: vec![Node { id: 0, parent: None, n_samples, kind: NodeKind::Leaf { value } }],
        }
    }

    pub fn n_features(&self) -> usize {
        self.metadata.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    /// Splits as `(order, covariate, threshold, loss_decrease)` sorted by the
    /// order in which they were accepted.
    pub fn split_sequence(&self) -> Vec<(usize, usize, f64, f64)> {
        let mut out: Vec<_> = self
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Split { covariate, threshold, loss_decrease, order, .. } => {
                    Some((order, covariate, threshold, loss_decrease))
                }
                NodeKind::Leaf { .. } => None,
            })
            .collect();
        out.sort_by_key(|s| s.0);
        out
    }

    fn leaf_of(&self, row: impl Fn(usize) -> f64) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id].kind {
                NodeKind::Leaf { .. } => return id,
                NodeKind::Split { covariate, threshold, left, right, .. } => {
                    id = if row(covariate) <= threshold { left } else { right };
                }
            }
        }
    }

    fn leaf_value(&self, id: usize) -> f64 {
        match self.nodes[id].kind {
            NodeKind::Leaf { value } => value,
            NodeKind::Split { .. } => unreachable!("routing always ends in a leaf"),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::Shape { expected: self.n_features(), found: row.len() });
        }
        Ok(self.leaf_value(self.leaf_of(|j| row[j])))
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape { expected: self.n_features(), found: x.ncols() });
        }
        Ok((0..x.nrows()).map(|i| self.leaf_value(self.leaf_of(|j| x[(i, j)]))).collect())
    }

    /// Leaf node id reached by every row of `x`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape { expected: self.n_features(), found: x.ncols() });
        }
        Ok((0..x.nrows()).map(|i| self.leaf_of(|j| x[(i, j)])).collect())
    }

    /// Sum of recorded loss decreases per covariate.
    pub fn variable_importance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features()];
        for node in &self.nodes {
            if let NodeKind::Split { covariate, loss_decrease, .. } = node.kind {
                out[covariate] += loss_decrease;
            }
        }
        out
    }

    /// Covariates used by at least one split.
    pub fn used_covariates(&self) -> Vec<bool> {
        let mut out = vec![false; self.n_features()];
        for node in &self.nodes {
            if let NodeKind::Split { covariate, .. } = node.kind {
                out[covariate] = true;
            }
        }
        out
    }

    // Node ids that survive pruning at `cp`: a split survives only if it and
    // all of its ancestors decreased the loss by more than cp * initial loss.
    fn surviving(&self, cp: f64) -> (Vec<bool>, Vec<bool>) {
        let cutoff = cp * self.metadata.initial_loss;
        let mut keep = vec![false; self.nodes.len()];
        let mut collapse = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            keep[id] = true;
            if let NodeKind::Split { loss_decrease, left, right, .. } = self.nodes[id].kind {
                if loss_decrease > cutoff {
                    stack.push(left);
                    stack.push(right);
                } else {
                    collapse[id] = true;
                }
            }
        }
        (keep, collapse)
    }

    fn merged_value(&self, id: usize) -> f64 {
        let mut weighted = 0.0;
        let mut total = 0usize;
        let mut stack = vec![id];
        while let Some(i) = stack.pop() {
            match self.nodes[i].kind {
                NodeKind::Leaf { value } => {
                    weighted += value * self.nodes[i].n_samples as f64;
                    total += self.nodes[i].n_samples;
                }
                NodeKind::Split { left, right, .. } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            weighted / total as f64
        }
    }

    fn pruned_structure(&self, cp: f64) -> Result<Option<SdTree>> {
        if !(cp >= 0.0) {
            return Err(Error::Config(format!("cp must be non-negative, got {cp}")));
        }
        let (keep, collapse) = self.surviving(cp);
        if !collapse.iter().any(|&c| c) {
            return Ok(None);
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for (id, &k) in keep.iter().enumerate() {
            if k {
                remap[id] = next;
                next += 1;
            }
        }
        let mut nodes = Vec::with_capacity(next);
        for (id, node) in self.nodes.iter().enumerate() {
            if !keep[id] {
                continue;
            }
            let kind = if collapse[id] {
                NodeKind::Leaf { value: self.merged_value(id) }
            } else {
                match node.kind.clone() {
                    NodeKind::Split { covariate, threshold, loss_decrease, order, left, right } => NodeKind::Split {
                        covariate,
                        threshold,
                        loss_decrease,
                        order,
                        left: remap[left],
                        right: remap[right],
                    },
                    leaf => leaf,
                }
            };
            nodes.push(Node { id: remap[id], parent: node.parent.map(|p| remap[p]), n_samples: node.n_samples, kind });
        }
        let mut metadata = self.metadata.clone();
        metadata.cp = cp;
        metadata.final_loss = None;
        metadata.approximate_levels = true;
        Ok(Some(SdTree { version: self.version, metadata, nodes }))
    }

    /// Removes every split whose recorded decrease is at most
    /// `cp * initial_loss`, together with its subtree. Collapsed leaves take
    /// the sample-weighted mean of the leaves they replace, which is an
    /// approximation of the refitted level; see [`SdTree::prune_refit`].
    pub fn prune(&self, cp: f64) -> Result<SdTree> {
        Ok(self.pruned_structure(cp)?.unwrap_or_else(|| self.clone()))
    }

    /// Prunes like [`SdTree::prune`] and then re-solves all leaf levels by
    /// least squares on the coarsened partition, using the training data the
    /// tree was grown on.
    pub fn prune_refit(&self, cp: f64, x: &DMatrix<f64>, y: &[f64], transform: &SpectralTransform) -> Result<SdTree> {
        let mut pruned = match self.pruned_structure(cp)? {
            Some(t) => t,
            None => return Ok(self.clone()),
        };
        pruned.refit_levels(x, y, transform)?;
        Ok(pruned)
    }

    /// Re-solves `min ||Q(Y - P c)||` for the current partition.
    pub fn refit_levels(&mut self, x: &DMatrix<f64>, y: &[f64], transform: &SpectralTransform) -> Result<()> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::Shape { expected: n, found: y.len() });
        }
        if transform.n() != n {
            return Err(Error::Shape { expected: n, found: transform.n() });
        }
        let leaves = self.apply(x)?;
        let leaf_ids: Vec<usize> = self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect();
        let mut column = vec![usize::MAX; self.nodes.len()];
        for (c, &id) in leaf_ids.iter().enumerate() {
            column[id] = c;
        }
        let mut indicator = DMatrix::zeros(n, leaf_ids.len());
        for (i, &leaf) in leaves.iter().enumerate() {
            indicator[(i, column[leaf])] = 1.0;
        }
        let qp = transform.apply_matrix(&indicator)?;
        let qy = transform.apply(&DVector::from_column_slice(y))?;
        let levels = min_norm_solve(&qp, &qy, leaf_ids.len());
        let loss = (&qy - &qp * &levels).norm_squared() / n as f64;
        for (c, &id) in leaf_ids.iter().enumerate() {
            self.nodes[id].kind = NodeKind::Leaf { value: levels[c] };
        }
        self.metadata.final_loss = Some(loss);
        self.metadata.approximate_levels = false;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SdTree> {
        let tree: SdTree = serde_json::from_str(text)?;
        tree.validate()?;
        Ok(tree)
    }

    /// Structural checks for trees read from external sources.
    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported tree format version {} (expected {MODEL_FORMAT_VERSION})",
                self.version
            )));
        }
        if self.nodes.is_empty() {
            return Err(Error::Parse("tree has no nodes".into()));
        }
        let mut seen_as_child = vec![false; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if node.id != id {
                return Err(Error::Parse(format!("node at position {id} has id {}", node.id)));
            }
            if (id == 0) != node.parent.is_none() {
                return Err(Error::Parse(format!("node {id} has an invalid parent link")));
            }
            if let NodeKind::Split { covariate, left, right, threshold, .. } = node.kind {
                if covariate >= self.metadata.n_features {
                    return Err(Error::Parse(format!("node {id} splits on unknown covariate {covariate}")));
                }
                if !threshold.is_finite() {
                    return Err(Error::Parse(format!("node {id} has a non-finite threshold")));
                }
                for child in [left, right] {
                    if child <= id || child >= self.nodes.len() || seen_as_child[child] {
                        return Err(Error::Parse(format!("node {id} has an invalid child {child}")));
                    }
                    if self.nodes[child].parent != Some(id) {
                        return Err(Error::Parse(format!("child {child} does not point back to {id}")));
                    }
                    seen_as_child[child] = true;
                }
            }
        }
        if seen_as_child.iter().skip(1).any(|&s| !s) {
            return Err(Error::Parse("tree contains unreachable nodes".into()));
        }
        Ok(())
    }
}

//! Spectrally deconfounded regression trees.
//!
//! Trees are grown greedily: every region caches its best split, the best
//! cached split overall is applied when its realized decrease of the spectral
//! loss exceeds `cp` times the initial loss, and the leaf levels are re-solved
//! by least squares after each accepted split.

mod model;
mod state;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use model::{Node, NodeKind, SdTree, TreeMetadata, MODEL_FORMAT_VERSION};
pub use state::{improves, PartitionState, PendingSplit, SplitCandidate, COLLINEAR_TOLERANCE};

use crate::error::{Error, Result};
use crate::spectral::SpectralTransform;

// Splits that decrease the loss by less than this fraction of the initial
// loss are rounding noise and are never accepted.
const NUMERICAL_DECREASE_FLOOR: f64 = 1e-12;

// Responses whose transformed variance is this small relative to their
// squared norm are treated as constant.
const CONSTANT_RESPONSE_RATIO: f64 = 1e-24;

/// Which cached splits are refreshed after a split is accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Only the two regions created by the split are re-scored; the other
    /// regions keep their (possibly stale) cached candidates.
    #[serde(rename = "SDT1")]
    Sdt1,
    /// All regions are re-scored after every split.
    #[serde(rename = "SDT2")]
    Sdt2,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Sdt1 => "SDT1",
            Variant::Sdt2 => "SDT2",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SDT1" => Ok(Variant::Sdt1),
            "SDT2" => Ok(Variant::Sdt2),
            other => Err(Error::Config(format!("unknown tree variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Cost-complexity parameter: a split must reduce the loss by more than
    /// `cp` times the initial loss.
    pub cp: f64,
    /// Upper bound on the number of splits; unbounded when `None`.
    pub max_splits: Option<usize>,
    /// Covariates sampled before every region evaluation; all when `None`.
    pub mtry: Option<usize>,
    pub variant: Variant,
    /// Minimum number of samples on each side of a split.
    pub min_leaf: usize,
    /// Maximum number of thresholds evaluated per covariate and region.
    pub max_candidates: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { cp: 0.01, max_splits: None, mtry: None, variant: Variant::Sdt1, min_leaf: 5, max_candidates: 100 }
    }
}

impl TreeConfig {
    pub fn resolved_mtry(&self, p: usize) -> Result<usize> {
        let mtry = self.mtry.unwrap_or(p);
        if mtry < 1 || mtry > p {
            return Err(Error::Config(format!("mtry must lie in [1, {p}], got {mtry}")));
        }
        Ok(mtry)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.cp >= 0.0) || !self.cp.is_finite() {
            return Err(Error::Config(format!("cp must be a finite non-negative number, got {}", self.cp)));
        }
        if self.max_splits == Some(0) {
            return Err(Error::Config("the maximum number of splits must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        if self.max_candidates == 0 {
            return Err(Error::Config("max_candidates must be at least 1".into()));
        }
        self.resolved_mtry(p).map(|_| ())
    }
}

fn sample_covariates<R: Rng + ?Sized>(rng: &mut R, p: usize, mtry: usize) -> Vec<usize> {
    if mtry >= p {
        return (0..p).collect();
    }
    let mut chosen = rand::seq::index::sample(rng, p, mtry).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Grows a tree on `(x, y)` minimizing `||Q (y - f(x))||^2 / n`.
///
/// `rng` only drives the covariate subsampling; with `mtry = p` the result is
/// deterministic.
pub fn fit_sdtree<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &[f64],
    transform: &SpectralTransform,
    config: &TreeConfig,
    rng: &mut R,
) -> Result<SdTree> {
    let (n, p) = x.shape();
    config.validate(p)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("design matrix contains non-finite values".into()));
    }
    let mtry = config.resolved_mtry(p)?;
    let mut state = PartitionState::new(x, y, transform)?;

    let metadata = TreeMetadata {
        n_features: p,
        n_train: n,
        cp: config.cp,
        max_splits: config.max_splits,
        mtry,
        min_leaf: config.min_leaf,
        max_candidates: config.max_candidates,
        variant: config.variant,
        transform: transform.kind(),
        seed: None,
        initial_loss: state.initial_loss(),
        final_loss: Some(state.current_loss()),
        approximate_levels: false,
    };
    let mut tree = SdTree::single_leaf(metadata, state.levels()[0], n);

    let scale = state.transformed_response().norm_squared() / n as f64;
    if state.initial_loss() <= CONSTANT_RESPONSE_RATIO * scale {
        return Ok(tree);
    }

    let threshold = (config.cp * state.initial_loss()).max(NUMERICAL_DECREASE_FLOOR * state.initial_loss());
    let evaluate = |state: &PartitionState, region: usize, rng: &mut R| {
        let covariates = sample_covariates(rng, p, mtry);
        state.evaluate_region_splits(region, &covariates, config.min_leaf, config.max_candidates)
    };

    let mut region_leaf = vec![0usize];
    let mut cache = vec![evaluate(&state, 0, rng)];
    let mut splits = 0usize;
    while config.max_splits.is_none_or(|m| splits < m) {
        let mut best: Option<&SplitCandidate> = None;
        for candidate in cache.iter().flatten() {
            if best.is_none_or(|b| improves(candidate.score, b.score)) {
                best = Some(candidate);
            }
        }
        let Some(best) = best else { break };
        let pending = state.prepare_split(best)?;
        if !(pending.decrease > threshold) {
            break;
        }
        let candidate = pending.candidate.clone();
        let decrease = pending.decrease;
        let region = candidate.region;
        let new_region = state.commit_split(pending)?;

        let parent = region_leaf[region];
        let left = tree.nodes.len();
        let right = left + 1;
        let parent_samples = tree.nodes[parent].n_samples;
        tree.nodes[parent].kind = NodeKind::Split {
            covariate: candidate.covariate,
            threshold: candidate.threshold,
            loss_decrease: decrease,
            order: splits,
            left,
            right,
        };
        let left_samples = state.region_members(new_region).len();
        tree.nodes.push(Node {
            id: left,
            parent: Some(parent),
            n_samples: left_samples,
            kind: NodeKind::Leaf { value: 0.0 },
        });
        tree.nodes.push(Node {
            id: right,
            parent: Some(parent),
            n_samples: parent_samples - left_samples,
            kind: NodeKind::Leaf { value: 0.0 },
        });
        region_leaf[region] = right;
        region_leaf.push(left);
        splits += 1;

        match config.variant {
            Variant::Sdt1 => {
                cache[region] = evaluate(&state, region, rng);
                cache.push(evaluate(&state, new_region, rng));
            }
            Variant::Sdt2 => {
                cache.push(None);
                for (b, slot) in cache.iter_mut().enumerate() {
                    *slot = evaluate(&state, b, rng);
                }
            }
        }
    }

    for (region, &leaf) in region_leaf.iter().enumerate() {
        tree.nodes[leaf].kind = NodeKind::Leaf { value: state.levels()[region] };
    }
    tree.metadata.final_loss = Some(state.current_loss());
    Ok(tree)
}

//! Bagged ensembles of spectrally deconfounded trees.
//!
//! Every tree is grown on its own bootstrap sample with a transform
//! recomputed from the bootstrap design matrix. Tree `t` draws its bootstrap
//! indices and covariate subsets from a generator seeded with `seed ^ t`, so
//! a fitted forest does not depend on how many worker threads were used.

mod inspect;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use inspect::{
    partial_dependence, regularization_paths, stability_paths, value_grid, variable_importance, PartialDependence,
};

use crate::error::{Error, Result};
use crate::spectral::{SpectralTransform, TransformSpec};
use crate::tree::{fit_sdtree, SdTree, TreeConfig, Variant, MODEL_FORMAT_VERSION};
use crate::util::{pairwise_sum, rng_from_seed};
use crate::Regressor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Covariates available at each split; `floor(p / 2)` (at least 1) when
    /// `None`.
    pub mtry: Option<usize>,
    pub cp: f64,
    pub transform: TransformSpec,
    /// Bootstrap sample size; `n` when `None`.
    pub sample_size: Option<usize>,
    pub max_candidates: usize,
    pub min_leaf: usize,
    pub variant: Variant,
    pub max_splits: Option<usize>,
    pub seed: u64,
    /// Reuse the full-data transform restricted to each bootstrap sample
    /// instead of recomputing it. Faster but approximate.
    pub share_q: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            mtry: None,
            cp: 0.0,
            transform: TransformSpec::trim(),
            sample_size: None,
            max_candidates: 100,
            min_leaf: 5,
            variant: Variant::Sdt1,
            max_splits: None,
            seed: 0,
            share_q: false,
        }
    }
}

impl ForestConfig {
    /// The same configuration with the identity transform, i.e. a classical
    /// bagged CART forest.
    pub fn classical(&self) -> Self {
        ForestConfig { transform: TransformSpec::identity(), ..self.clone() }
    }

    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 2).max(1))
    }

    pub fn tree_config(&self, p: usize) -> TreeConfig {
        TreeConfig {
            cp: self.cp,
            max_splits: self.max_splits,
            mtry: Some(self.resolved_mtry(p)),
            variant: self.variant,
            min_leaf: self.min_leaf,
            max_candidates: self.max_candidates,
        }
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.sample_size == Some(0) {
            return Err(Error::Config("bootstrap sample size must be positive".into()));
        }
        if n < 10 {
            return Err(Error::Input(format!("a forest needs at least 10 samples, got {n}")));
        }
        self.tree_config(p).validate(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub config: ForestConfig,
    pub n_features: usize,
    pub n_train: usize,
    pub trees: Vec<SdTree>,
    /// Bootstrap indices of every tree, with repetitions.
    pub bags: Vec<Vec<usize>>,
}

fn draw_bag<R: Rng + ?Sized>(rng: &mut R, n: usize, size: usize) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..n)).collect()
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

fn fit_tree_on_bag(
    x: &DMatrix<f64>,
    y: &[f64],
    config: &ForestConfig,
    shared: Option<&SpectralTransform>,
    bag: &[usize],
    seed: u64,
    rng: &mut impl Rng,
) -> Result<SdTree> {
    let xb = rows(x, bag);
    let yb: Vec<f64> = bag.iter().map(|&i| y[i]).collect();
    let transform = match shared {
        Some(full) => full.restrict_rows(bag)?,
        None => config.transform.build(&xb)?,
    };
    let mut tree = fit_sdtree(&xb, &yb, &transform, &config.tree_config(x.ncols()), rng)?;
    tree.metadata.seed = Some(seed);
    Ok(tree)
}

fn check_training_data(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::Shape { expected: x.nrows(), found: y.len() });
    }
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        let (row, col) = (pos % x.nrows(), pos / x.nrows());
        return Err(Error::Input(format!("non-finite predictor at row {row}, column {col}")));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite response at row {i}")));
    }
    if y.iter().all(|&v| v == y[0]) {
        warn!("response is constant; every tree will be a single leaf");
    }
    Ok(())
}

/// Fits a forest with bootstrap samples drawn from the per-tree streams.
pub fn fit_forest(x: &DMatrix<f64>, y: &[f64], config: &ForestConfig) -> Result<ForestModel> {
    let (n, p) = x.shape();
    config.validate(n, p)?;
    check_training_data(x, y)?;
    let size = config.sample_size.unwrap_or(n);
    let shared = if config.share_q { Some(config.transform.build(x)?) } else { None };

    let results: Vec<Result<(SdTree, Vec<usize>)>> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let seed = config.seed ^ t as u64;
            let mut rng = rng_from_seed(seed);
            let bag = draw_bag(&mut rng, n, size);
            let tree = fit_tree_on_bag(x, y, config, shared.as_ref(), &bag, seed, &mut rng)?;
            Ok((tree, bag))
        })
        .collect();
    assemble(config, n, p, results)
}

/// Fits one tree per supplied index set instead of drawing bootstrap
/// samples. Useful for held-out experiments and tests.
pub fn fit_forest_on_bags(
    x: &DMatrix<f64>,
    y: &[f64],
    config: &ForestConfig,
    bags: Vec<Vec<usize>>,
) -> Result<ForestModel> {
    let (n, p) = x.shape();
    let config = ForestConfig { n_trees: bags.len(), ..config.clone() };
    config.validate(n, p)?;
    check_training_data(x, y)?;
    if let Some(bad) = bags.iter().flatten().find(|&&i| i >= n) {
        return Err(Error::Input(format!("bag index {bad} is out of range for {n} samples")));
    }
    let shared = if config.share_q { Some(config.transform.build(x)?) } else { None };
    let results: Vec<Result<(SdTree, Vec<usize>)>> = bags
        .into_par_iter()
        .enumerate()
        .map(|(t, bag)| {
            let seed = config.seed ^ t as u64;
            let mut rng = rng_from_seed(seed);
            let tree = fit_tree_on_bag(x, y, &config, shared.as_ref(), &bag, seed, &mut rng)?;
            Ok((tree, bag))
        })
        .collect();
    assemble(&config, n, p, results)
}

fn assemble(
    config: &ForestConfig,
    n: usize,
    p: usize,
    results: Vec<Result<(SdTree, Vec<usize>)>>,
) -> Result<ForestModel> {
    let mut trees = Vec::with_capacity(results.len());
    let mut bags = Vec::with_capacity(results.len());
    for r in results {
        let (tree, bag) = r?;
        trees.push(tree);
        bags.push(bag);
    }
    Ok(ForestModel { version: MODEL_FORMAT_VERSION, config: config.clone(), n_features: p, n_train: n, trees, bags })
}

impl ForestModel {
    /// Per-tree predictions, one vector per tree.
    pub fn predict_trees(&self, x: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
        if x.ncols() != self.n_features {
            return Err(Error::Shape { expected: self.n_features, found: x.ncols() });
        }
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Mean of the tree predictions (pairwise summation over trees).
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let per_tree = self.predict_trees(x)?;
        let mut column = vec![0.0; per_tree.len()];
        Ok((0..x.nrows())
            .map(|i| {
                for (c, tree) in column.iter_mut().zip(&per_tree) {
                    *c = tree[i];
                }
                pairwise_sum(&column) / per_tree.len() as f64
            })
            .collect())
    }

    /// Out-of-bag predictions for the training rows. Rows contained in every
    /// bag get `NaN` and a `false` mask entry.
    pub fn oob_predict(&self, x_train: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<bool>)> {
        if x_train.nrows() != self.n_train {
            return Err(Error::Shape { expected: self.n_train, found: x_train.nrows() });
        }
        let per_tree = self.predict_trees(x_train)?;
        let mut in_bag = vec![vec![false; self.n_train]; self.trees.len()];
        for (mask, bag) in in_bag.iter_mut().zip(&self.bags) {
            for &i in bag {
                mask[i] = true;
            }
        }
        let mut predictions = Vec::with_capacity(self.n_train);
        let mut covered = Vec::with_capacity(self.n_train);
        let mut values = Vec::with_capacity(self.trees.len());
        for i in 0..self.n_train {
            values.clear();
            values.extend((0..self.trees.len()).filter(|&t| !in_bag[t][i]).map(|t| per_tree[t][i]));
            if values.is_empty() {
                predictions.push(f64::NAN);
                covered.push(false);
            } else {
                predictions.push(pairwise_sum(&values) / values.len() as f64);
                covered.push(true);
            }
        }
        Ok((predictions, covered))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<ForestModel> {
        let model: ForestModel = serde_json::from_str(text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported forest format version {} (expected {MODEL_FORMAT_VERSION})",
                model.version
            )));
        }
        if model.trees.is_empty() || model.trees.len() != model.bags.len() {
            return Err(Error::Parse("forest must contain one bag per tree and at least one tree".into()));
        }
        for tree in &model.trees {
            tree.validate()?;
            if tree.n_features() != model.n_features {
                return Err(Error::Parse("tree feature count differs from the forest".into()));
            }
        }
        Ok(model)
    }
}

impl Regressor for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        ForestModel::predict(self, x)
    }
}

#[cfg(test)]
mod tests;

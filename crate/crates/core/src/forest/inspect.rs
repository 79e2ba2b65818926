//! Importance, pruning paths and partial dependence.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::util::pairwise_sum;
use crate::Regressor;

/// Mean over trees of the summed spectral-loss decreases per covariate.
pub fn variable_importance(model: &ForestModel) -> Vec<f64> {
    mean_over_trees(model, model.trees.iter().map(|t| t.variable_importance()).collect())
}

fn mean_over_trees(model: &ForestModel, per_tree: Vec<Vec<f64>>) -> Vec<f64> {
    let mut column = vec![0.0; per_tree.len()];
    (0..model.n_features)
        .map(|j| {
            for (c, row) in column.iter_mut().zip(&per_tree) {
                *c = row[j];
            }
            pairwise_sum(&column) / per_tree.len() as f64
        })
        .collect()
}

fn check_grid(cp_grid: &[f64]) -> Result<()> {
    if cp_grid.is_empty() {
        return Err(Error::Config("cp grid is empty".into()));
    }
    if cp_grid.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::Config("cp values must be non-negative".into()));
    }
    if cp_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("cp grid must be ascending".into()));
    }
    Ok(())
}

/// Variable importance after pruning every tree to each `cp` in the grid.
/// Row `k` corresponds to `cp_grid[k]`.
pub fn regularization_paths(model: &ForestModel, cp_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_grid(cp_grid)?;
    cp_grid
        .iter()
        .map(|&cp| {
            let per_tree =
                model.trees.iter().map(|t| t.prune(cp).map(|p| p.variable_importance())).collect::<Result<Vec<_>>>()?;
            Ok(mean_over_trees(model, per_tree))
        })
        .collect()
}

/// Fraction of trees that still split on each covariate after pruning to
/// each `cp` in the grid.
pub fn stability_paths(model: &ForestModel, cp_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_grid(cp_grid)?;
    let n_trees = model.trees.len() as f64;
    cp_grid
        .iter()
        .map(|&cp| {
            let mut counts = vec![0usize; model.n_features];
            for tree in &model.trees {
                for (c, used) in counts.iter_mut().zip(tree.prune(cp)?.used_covariates()) {
                    *c += used as usize;
                }
            }
            Ok(counts.into_iter().map(|c| c as f64 / n_trees).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialDependence {
    pub covariate: usize,
    pub grid: Vec<f64>,
    /// Average prediction over the reference rows at every grid value.
    pub mean: Vec<f64>,
    /// `(row index, curve)` for the requested individual observations.
    pub individual: Vec<(usize, Vec<f64>)>,
}

/// Predicts on `x_ref` with column `covariate` overwritten by each grid value.
pub fn partial_dependence<M: Regressor + ?Sized>(
    model: &M,
    covariate: usize,
    grid: &[f64],
    x_ref: &DMatrix<f64>,
    individual_rows: &[usize],
) -> Result<PartialDependence> {
    if x_ref.ncols() != model.n_features() {
        return Err(Error::Shape { expected: model.n_features(), found: x_ref.ncols() });
    }
    if covariate >= x_ref.ncols() {
        return Err(Error::Range(format!("covariate {covariate} does not exist ({} covariates)", x_ref.ncols())));
    }
    if x_ref.nrows() == 0 {
        return Err(Error::Input("reference data has no rows".into()));
    }
    if let Some(&bad) = individual_rows.iter().find(|&&r| r >= x_ref.nrows()) {
        return Err(Error::Range(format!("row {bad} is out of range")));
    }
    let mut x = x_ref.clone();
    let mut mean = Vec::with_capacity(grid.len());
    let mut individual: Vec<(usize, Vec<f64>)> =
        individual_rows.iter().map(|&r| (r, Vec::with_capacity(grid.len()))).collect();
    for &g in grid {
        x.column_mut(covariate).fill(g);
        let pred = model.predict(&x)?;
        mean.push(pairwise_sum(&pred) / pred.len() as f64);
        for (row, curve) in individual.iter_mut() {
            curve.push(pred[*row]);
        }
    }
    Ok(PartialDependence { covariate, grid: grid.to_vec(), mean, individual })
}

/// `points` equally spaced values spanning the observed range of a column.
pub fn value_grid(x: &DMatrix<f64>, covariate: usize, points: usize) -> Result<Vec<f64>> {
    if covariate >= x.ncols() {
        return Err(Error::Range(format!("covariate {covariate} does not exist")));
    }
    if points == 0 || x.nrows() == 0 {
        return Ok(Vec::new());
    }
    let col = x.column(covariate);
    let (lo, hi) = (col.min(), col.max());
    if points == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|k| if k + 1 == points { hi } else { lo + step * k as f64 }).collect())
}

//! Spectrally deconfounded regression trees and random forests.
//!
//! Under dense hidden confounding, ordinary least squares targets
//! `E[Y | X]`, which mixes the direct effect of `X` with the confounder's
//! contribution. The estimators here instead minimize the transformed
//! objective `||Q (Y - f(X))||^2 / n`, where `Q` is a spectral transform of the
//! design matrix (by default the trim transform capping all singular values at
//! their median).
//!
//! * [`spectral`]: SVD and the trim / PCA / identity transforms.
//! * [`tree`]: greedy tree growth with incremental split scoring, pruning.
//! * [`forest`]: bagged ensembles, out-of-bag predictions, importance,
//!   regularization and stability paths, partial dependence.
//! * [`simgen`]: synthetic confounded data.
//! * [`experiments`]: simulation studies with tabular outputs.

pub mod error;
pub mod experiments;
pub mod forest;
pub mod io;
pub mod simgen;
pub mod spectral;
pub mod tree;
pub mod util;

pub use error::{Error, Result};
pub use forest::{fit_forest, ForestConfig, ForestModel};
pub use spectral::{SpectralTransform, TransformKind, TransformSpec};
pub use tree::{fit_sdtree, SdTree, TreeConfig, Variant};

/// Anything that maps rows of a design matrix to predictions.
pub trait Regressor {
    fn n_features(&self) -> usize;
    fn predict(&self, x: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>>;
}

impl Regressor for SdTree {
    fn n_features(&self) -> usize {
        SdTree::n_features(self)
    }

    fn predict(&self, x: &nalgebra::DMatrix<f64>) -> Result<Vec<f64>> {
        SdTree::predict(self, x)
    }
}

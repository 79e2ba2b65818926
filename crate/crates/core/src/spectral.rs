//! Singular value decompositions and the spectral transforms built from them.
//!
//! A transform is stored in factorized form `Q = I - U diag(1 - shrink) U^T`
//! with `U` orthonormal, so it is applied to vectors without ever forming the
//! `n x n` matrix. On `col(U)` the transform rescales each singular direction
//! by its shrink ratio; on the orthogonal complement it is the identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Thin SVD `M = U diag(d) V^T` restricted to the numerically non-zero
/// singular values, ordered non-increasingly.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub d: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.d.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.d) * self.v.transpose()
    }
}

pub fn compute_svd(m: &DMatrix<f64>) -> Result<SvdFactors> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Input("matrix must have at least one row and one column".into()));
    }
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        let (row, col) = (pos % m.nrows(), pos / m.nrows());
        return Err(Error::Input(format!("non-finite entry at row {row}, column {col}")));
    }
    if m.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateRank("matrix is identically zero".into()));
    }

    let svd = m.clone().svd(true, true);
    let u_full = svd.u.ok_or_else(|| Error::Numerical("SVD did not return left singular vectors".into()))?;
    let vt_full = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let values = svd.singular_values;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let largest = values[order[0]];
    if !(largest > 0.0) {
        return Err(Error::DegenerateRank("largest singular value is zero".into()));
    }
    let kept: Vec<usize> = order.into_iter().filter(|&i| values[i] > RANK_TOLERANCE * largest).collect();

    let r = kept.len();
    let mut u = DMatrix::zeros(m.nrows(), r);
    let mut v = DMatrix::zeros(m.ncols(), r);
    let mut d = DVector::zeros(r);
    for (dst, &src) in kept.iter().enumerate() {
        u.set_column(dst, &u_full.column(src));
        v.set_column(dst, &vt_full.row(src).transpose());
        d[dst] = values[src];
    }
    Ok(SvdFactors { u, d, v })
}

/// Centers every column and scales it to unit sample standard deviation.
pub fn standardize_columns(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Input("standardization needs at least two rows".into()));
    }
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) || sd <= 1e-12 * mean.abs() {
            return Err(Error::ZeroVariance { column: j });
        }
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Trim,
    Pca,
    Identity,
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransformKind::Trim => "trim",
            TransformKind::Pca => "pca",
            TransformKind::Identity => "identity",
        })
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "trim" => Ok(TransformKind::Trim),
            "pca" => Ok(TransformKind::Pca),
            "identity" | "none" => Ok(TransformKind::Identity),
            other => Err(Error::Config(format!("unknown transform '{other}' (expected trim, pca or identity)"))),
        }
    }
}

/// Recipe for building a transform from a design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    /// Standardize the columns of X before the SVD.
    #[serde(default)]
    pub scale_columns: bool,
    /// Number of leading singular directions removed by the PCA adjustment.
    #[serde(default)]
    pub pca_remove: usize,
}

impl TransformSpec {
    pub fn trim() -> Self {
        TransformSpec { kind: TransformKind::Trim, scale_columns: false, pca_remove: 0 }
    }

    pub fn identity() -> Self {
        TransformSpec { kind: TransformKind::Identity, scale_columns: false, pca_remove: 0 }
    }

    pub fn pca(q_remove: usize) -> Self {
        TransformSpec { kind: TransformKind::Pca, scale_columns: false, pca_remove: q_remove }
    }

    pub fn with_scaling(mut self, scale_columns: bool) -> Self {
        self.scale_columns = scale_columns;
        self
    }

    pub fn build(&self, x: &DMatrix<f64>) -> Result<SpectralTransform> {
        match self.kind {
            TransformKind::Trim => trim_transform(x, self.scale_columns),
            TransformKind::Pca => pca_transform(x, self.pca_remove, self.scale_columns),
            TransformKind::Identity => Ok(SpectralTransform::identity(x.nrows())),
        }
    }
}

/// `Q = I - U diag(1 - shrink) U^T`, kept in factorized form.
#[derive(Debug, Clone)]
pub struct SpectralTransform {
    kind: TransformKind,
    basis: DMatrix<f64>,
    shrink: Vec<f64>,
    tau: Option<f64>,
    singular_values: Vec<f64>,
    n: usize,
    // Columns of `basis` with shrink < 1 and their weights 1 - shrink.
    active_basis: DMatrix<f64>,
    active_weights: Vec<f64>,
}

impl SpectralTransform {
    fn from_parts(
        kind: TransformKind,
        basis: DMatrix<f64>,
        shrink: Vec<f64>,
        tau: Option<f64>,
        singular_values: Vec<f64>,
    ) -> Self {
        let n = basis.nrows();
        let active: Vec<usize> = (0..shrink.len()).filter(|&k| shrink[k] < 1.0).collect();
        let mut active_basis = DMatrix::zeros(n, active.len());
        for (dst, &src) in active.iter().enumerate() {
            active_basis.set_column(dst, &basis.column(src));
        }
        let active_weights = active.iter().map(|&k| 1.0 - shrink[k]).collect();
        SpectralTransform { kind, basis, shrink, tau, singular_values, n, active_basis, active_weights }
    }

    pub fn identity(n: usize) -> Self {
        SpectralTransform::from_parts(TransformKind::Identity, DMatrix::zeros(n, 0), Vec::new(), None, Vec::new())
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    /// Ambient dimension (number of samples).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn shrink(&self) -> &[f64] {
        &self.shrink
    }

    /// Trim threshold; `None` for PCA and identity transforms.
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// Singular values of the (possibly standardized) matrix the transform
    /// was built from.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub(crate) fn active_basis(&self) -> &DMatrix<f64> {
        &self.active_basis
    }

    pub(crate) fn active_weights(&self) -> &[f64] {
        &self.active_weights
    }

    /// `Q v` for a single vector.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n {
            return Err(Error::Shape { expected: self.n, found: v.len() });
        }
        Ok(self.apply_unchecked(v))
    }

    pub(crate) fn apply_unchecked(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.active_weights.is_empty() {
            return v.clone();
        }
        let mut coef = self.active_basis.tr_mul(v);
        for (c, w) in coef.iter_mut().zip(&self.active_weights) {
            *c *= w;
        }
        let mut out = v.clone();
        out.gemv(-1.0, &self.active_basis, &coef, 1.0);
        out
    }

    /// `Q M` for a matrix with `n` rows.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.n {
            return Err(Error::Shape { expected: self.n, found: m.nrows() });
        }
        if self.active_weights.is_empty() {
            return Ok(m.clone());
        }
        let mut coef = self.active_basis.tr_mul(m);
        for (mut row, w) in coef.row_iter_mut().zip(&self.active_weights) {
            row *= *w;
        }
        let mut out = m.clone();
        out.gemm(-1.0, &self.active_basis, &coef, 1.0);
        Ok(out)
    }

    /// Dense `n x n` matrix of the transform. Meant for diagnostics and tests.
    pub fn materialize(&self) -> DMatrix<f64> {
        let mut q = DMatrix::identity(self.n, self.n);
        if !self.active_weights.is_empty() {
            let scaled = DMatrix::from_fn(self.n, self.active_weights.len(), |i, k| {
                self.active_basis[(i, k)] * self.active_weights[k]
            });
            q.gemm(-1.0, &scaled, &self.active_basis.transpose(), 1.0);
        }
        q
    }

    /// Transform on a row subset (with repetitions allowed), reusing the
    /// singular directions of the full matrix instead of recomputing an SVD.
    ///
    /// Restricting `U diag(sqrt(w))` to the selected rows and
    /// re-orthonormalizing gives `I - L diag(s^2) L^T`; squared singular
    /// values above one (possible with repeated rows) are capped at one so
    /// the result stays a contraction. This is an approximation to the
    /// transform recomputed on the subset.
    pub fn restrict_rows(&self, rows: &[usize]) -> Result<SpectralTransform> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n) {
            return Err(Error::Shape { expected: self.n, found: bad + 1 });
        }
        let m = rows.len();
        let k = self.active_weights.len();
        if k == 0 || m == 0 {
            let mut t = SpectralTransform::identity(m);
            t.kind = self.kind;
            t.tau = self.tau;
            return Ok(t);
        }
        let a = DMatrix::from_fn(m, k, |i, c| self.active_basis[(rows[i], c)] * self.active_weights[c].sqrt());
        let (basis, shrink) = if a.iter().all(|&v| v == 0.0) {
            (DMatrix::zeros(m, 0), Vec::new())
        } else {
            let svd = compute_svd(&a)?;
            let shrink = svd.d.iter().map(|s| 1.0 - (s * s).min(1.0)).collect();
            (svd.u, shrink)
        };
        Ok(SpectralTransform::from_parts(self.kind, basis, shrink, self.tau, self.singular_values.clone()))
    }
}

fn median_of_sorted_desc(values: &[f64]) -> f64 {
    let r = values.len();
    if r % 2 == 1 {
        values[r / 2]
    } else {
        0.5 * (values[r / 2 - 1] + values[r / 2])
    }
}

fn prepared(x: &DMatrix<f64>, scale_columns: bool) -> Result<SvdFactors> {
    if scale_columns {
        compute_svd(&standardize_columns(x)?)
    } else {
        compute_svd(x)
    }
}

/// Trim transform: caps every singular value of X at the median singular
/// value `tau`.
pub fn trim_transform(x: &DMatrix<f64>, scale_columns: bool) -> Result<SpectralTransform> {
    let svd = prepared(x, scale_columns)?;
    let r = svd.rank();
    if r < 2 {
        return Err(Error::DegenerateRank(format!(
            "trim transform needs at least two non-zero singular values, found {r}"
        )));
    }
    let d: Vec<f64> = svd.d.iter().copied().collect();
    let tau = median_of_sorted_desc(&d);
    let shrink = d.iter().map(|&di| di.min(tau) / di).collect();
    Ok(SpectralTransform::from_parts(TransformKind::Trim, svd.u, shrink, Some(tau), d))
}

/// PCA adjustment: removes the `q_remove` leading singular directions.
pub fn pca_transform(x: &DMatrix<f64>, q_remove: usize, scale_columns: bool) -> Result<SpectralTransform> {
    let svd = prepared(x, scale_columns)?;
    let r = svd.rank();
    if q_remove > r {
        return Err(Error::Range(format!("cannot remove {q_remove} principal components from a rank-{r} matrix")));
    }
    let shrink = (0..r).map(|k| if k < q_remove { 0.0 } else { 1.0 }).collect();
    let d = svd.d.iter().copied().collect();
    Ok(SpectralTransform::from_parts(TransformKind::Pca, svd.u, shrink, None, d))
}

//! Synthetic data from the linear confounding model
//!
//! ```text
//! X = H Gamma + E,    Y = f0(X) + H delta + nu
//! ```
//!
//! with Gaussian `H`, `E`, `Gamma`, `delta` and `nu`, plus a nonlinear
//! confounding variant and dense perturbations of existing data.

mod fourier;
mod random_tree;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

pub use fourier::{FourierF0, FourierSeries, FREQUENCY};
pub use random_tree::{RandomTreeF0, RandomTreeNode, REFERENCE_SAMPLES};

use crate::error::{Error, Result};
use crate::util::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F0Kind {
    Fourier,
    RandomTree,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub sigma_nu: f64,
    /// Number of Fourier terms per parent.
    pub fourier_terms: usize,
    pub n_parents: usize,
    /// Fraction of covariates affected by the confounders.
    pub density: f64,
    pub f0: F0Kind,
    /// Fourier coefficients are uniform on `[-coef_range, coef_range]`.
    pub coef_range: f64,
    pub tree_leaves: usize,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec::desk()
    }
}

impl SimSpec {
    /// Qualitative-study defaults: `n = 1000, p = 500, q = 20`.
    pub fn screening() -> Self {
        SimSpec { n: 1000, p: 500, ..SimSpec::desk() }
    }

    /// Dimension-study defaults: `n = 500, p = 500, q = 20`.
    pub fn dimension_study() -> Self {
        SimSpec { n: 500, p: 500, ..SimSpec::desk() }
    }

    /// Reduced dimension-study defaults for a single machine.
    pub fn desk() -> Self {
        SimSpec {
            n: 300,
            p: 300,
            q: 20,
            sigma_nu: 0.1,
            fourier_terms: 2,
            n_parents: 4,
            density: 1.0,
            f0: F0Kind::Fourier,
            coef_range: 1.0,
            tree_leaves: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::Config("n and p must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Config(format!("density must lie in [0, 1], got {}", self.density)));
        }
        if self.f0 == F0Kind::Fourier && self.n_parents > self.p {
            return Err(Error::Config(format!("cannot choose {} parents among {} covariates", self.n_parents, self.p)));
        }
        if !(self.sigma_nu >= 0.0) {
            return Err(Error::Config("sigma_nu must be non-negative".into()));
        }
        Ok(())
    }
}

/// The direct effect `f0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueFunction {
    Zero,
    Fourier(FourierF0),
    RandomTree(RandomTreeF0),
}

impl TrueFunction {
    pub fn eval_row(&self, row: &[f64]) -> f64 {
        match self {
            TrueFunction::Zero => 0.0,
            TrueFunction::Fourier(f) => f.eval_row(row),
            TrueFunction::RandomTree(t) => t.eval_row(row),
        }
    }

    pub fn eval(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = x[(i, j)];
                }
                self.eval_row(&row)
            })
            .collect()
    }

    pub fn parents(&self) -> Vec<usize> {
        match self {
            TrueFunction::Zero => Vec::new(),
            TrueFunction::Fourier(f) => {
                let mut p = f.parents();
                p.sort_unstable();
                p
            }
            TrueFunction::RandomTree(t) => t.parents(),
        }
    }
}

/// Random Fourier `f0` over the given parents with coefficients uniform on
/// `[-1, 1]`.
pub fn make_fourier_f0<R: Rng + ?Sized>(parents: &[usize], terms: usize, rng: &mut R) -> FourierF0 {
    FourierF0::random(parents, terms, 1.0, rng)
}

pub fn make_random_tree_f0<R: Rng + ?Sized>(p: usize, leaves: usize, rng: &mut R) -> RandomTreeF0 {
    RandomTreeF0::random(p, leaves, rng)
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Filled row by row so the draw order does not depend on storage order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Fixed parameters of the linear confounding model; every call to
/// [`LinearProcess::draw`] samples fresh `H`, `E` and `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProcess {
    pub p: usize,
    pub q: usize,
    pub sigma_nu: f64,
    /// `q x p` confounder loadings on X.
    pub gamma: DMatrix<f64>,
    /// Confounder effect on Y.
    pub delta: DVector<f64>,
    /// Covariates with non-zero loadings.
    pub confounded: Vec<usize>,
    pub truth: TrueFunction,
}

impl LinearProcess {
    /// Draws parents and `f0`, then `Gamma` (masked to a random subset of
    /// `ceil(density * p)` columns) and `delta`, in that order.
    pub fn new<R: Rng + ?Sized>(spec: &SimSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let truth = match spec.f0 {
            F0Kind::None => TrueFunction::Zero,
            F0Kind::Fourier => {
                let mut parents = sample(rng, spec.p, spec.n_parents).into_vec();
                parents.sort_unstable();
                TrueFunction::Fourier(FourierF0::random(&parents, spec.fourier_terms, spec.coef_range, rng))
            }
            F0Kind::RandomTree => TrueFunction::RandomTree(RandomTreeF0::random(spec.p, spec.tree_leaves, rng)),
        };
        let mut gamma = normal_matrix(spec.q, spec.p, rng);
        let affected = (spec.density * spec.p as f64).ceil() as usize;
        let mut confounded: Vec<usize> =
            if affected >= spec.p { (0..spec.p).collect() } else { sample(rng, spec.p, affected).into_vec() };
        confounded.sort_unstable();
        let mut keep = vec![false; spec.p];
        for &j in &confounded {
            keep[j] = true;
        }
        for (j, mut col) in gamma.column_iter_mut().enumerate() {
            if !keep[j] {
                col.fill(0.0);
            }
        }
        if spec.q == 0 {
            confounded.clear();
        }
        let delta = DVector::from_fn(spec.q, |_, _| rng.sample(StandardNormal));
        Ok(LinearProcess { p: spec.p, q: spec.q, sigma_nu: spec.sigma_nu, gamma, delta, confounded, truth })
    }

    /// Samples `n` observations, drawing `H`, then `E`, then `nu`.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SyntheticDataset {
        let h = normal_matrix(n, self.q, rng);
        let e = normal_matrix(n, self.p, rng);
        let nu = DVector::from_fn(n, |_, _| self.sigma_nu * rng.sample::<f64, _>(StandardNormal));
        let x = &h * &self.gamma + &e;
        let f0_values = self.truth.eval(&x);
        let confounding = &h * &self.delta;
        let y = (0..n).map(|i| f0_values[i] + confounding[i] + nu[i]).collect();
        SyntheticDataset { x, y, f0_values, parents: self.truth.parents(), h, e, nu: nu.as_slice().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// `f0` evaluated at every row of `x`.
    pub f0_values: Vec<f64>,
    pub parents: Vec<usize>,
    pub h: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub nu: Vec<f64>,
}

/// Draws a linear process and `spec.n` observations from it.
pub fn gen_linear<R: Rng + ?Sized>(spec: &SimSpec, rng: &mut R) -> Result<(LinearProcess, SyntheticDataset)> {
    let process = LinearProcess::new(spec, rng)?;
    let data = process.draw(spec.n, rng);
    Ok((process, data))
}

/// [`gen_linear`] with the generator seeded from `spec.seed`.
pub fn generate(spec: &SimSpec) -> Result<(LinearProcess, SyntheticDataset)> {
    gen_linear(spec, &mut rng_from_seed(spec.seed))
}

/// Univariate confounder acting nonlinearly through random Fourier functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSpec {
    pub n: usize,
    pub p: usize,
    /// Fourier terms of the confounding functions `g_j` and `d`.
    pub confounding_terms: usize,
    /// Coefficients of `g_j` are uniform on `[-x_coef_range, x_coef_range]`.
    pub x_coef_range: f64,
    /// Coefficients of `d` are uniform on `[-y_coef_range, y_coef_range]`.
    pub y_coef_range: f64,
    /// Standard deviation of the scale `delta` applied to `d(H)`.
    pub delta_sd: f64,
    pub sigma_nu: f64,
    pub n_parents: usize,
    pub fourier_terms: usize,
    pub seed: u64,
}

impl Default for NonlinearSpec {
    fn default() -> Self {
        NonlinearSpec {
            n: 500,
            p: 300,
            confounding_terms: 12,
            x_coef_range: 1.0,
            y_coef_range: 2.0,
            delta_sd: 2.0,
            sigma_nu: 0.01,
            n_parents: 1,
            fourier_terms: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearDataset {
    pub data: SyntheticDataset,
    pub truth: FourierF0,
    pub x_effects: Vec<FourierSeries>,
    pub y_effect: FourierSeries,
    pub delta: f64,
}

/// `X_j = g_j(H) + E_j`, `Y = f0(X) + delta * d(H) + nu` with univariate `H`.
pub fn gen_nonlinear<R: Rng + ?Sized>(spec: &NonlinearSpec, rng: &mut R) -> Result<NonlinearDataset> {
    if spec.n == 0 || spec.p == 0 || spec.n_parents > spec.p {
        return Err(Error::Config("invalid dimensions for the nonlinear generator".into()));
    }
    let mut parents = sample(rng, spec.p, spec.n_parents).into_vec();
    parents.sort_unstable();
    let truth = FourierF0::random(&parents, spec.fourier_terms, 1.0, rng);
    let x_effects: Vec<FourierSeries> =
        (0..spec.p).map(|_| FourierSeries::random(spec.confounding_terms, spec.x_coef_range, rng)).collect();
    let y_effect = FourierSeries::random(spec.confounding_terms, spec.y_coef_range, rng);
    let delta = Normal::new(0.0, spec.delta_sd).map_err(|e| Error::Config(e.to_string()))?.sample(rng);

    let h = normal_matrix(spec.n, 1, rng);
    let e = normal_matrix(spec.n, spec.p, rng);
    let nu: Vec<f64> = (0..spec.n).map(|_| spec.sigma_nu * rng.sample::<f64, _>(StandardNormal)).collect();
    let x = DMatrix::from_fn(spec.n, spec.p, |i, j| x_effects[j].eval(h[(i, 0)]) + e[(i, j)]);
    let f0_values = TrueFunction::Fourier(truth.clone()).eval(&x);
    let y = (0..spec.n).map(|i| f0_values[i] + delta * y_effect.eval(h[(i, 0)]) + nu[i]).collect();
    Ok(NonlinearDataset {
        data: SyntheticDataset { x, y, f0_values, parents, h, e, nu },
        truth,
        x_effects,
        y_effect,
        delta,
    })
}

/// Rank-one dense confounding added to existing data:
/// `X_tau = X + tau H Gamma`, `Y_tau = Y + tau H delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDraws {
    pub h: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: f64,
}

impl PerturbationDraws {
    pub fn draw<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Self {
        let h = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let gamma = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let delta = rng.sample(StandardNormal);
        PerturbationDraws { h, gamma, delta }
    }

    pub fn apply(&self, x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
        if x.nrows() != self.h.len() || y.len() != self.h.len() {
            return Err(Error::Shape { expected: self.h.len(), found: x.nrows().min(y.len()) });
        }
        if x.ncols() != self.gamma.len() {
            return Err(Error::Shape { expected: self.gamma.len(), found: x.ncols() });
        }
        if tau == 0.0 {
            return Ok((x.clone(), y.to_vec()));
        }
        let xt = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] + tau * self.h[i] * self.gamma[j]);
        let yt = y.iter().zip(&self.h).map(|(v, h)| v + tau * h * self.delta).collect();
        Ok((xt, yt))
    }
}

pub fn perturb_dense<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<f64>, PerturbationDraws)> {
    let draws = PerturbationDraws::draw(x.nrows(), x.ncols(), rng);
    let (xt, yt) = draws.apply(x, y, tau)?;
    Ok((xt, yt, draws))
}

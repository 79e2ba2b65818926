use rand::Rng;
use serde::{Deserialize, Serialize};

/// Frequency step of the Fourier basis `cos(0.2 k x)`, `sin(0.2 k x)`.
pub const FREQUENCY: f64 = 0.2;

/// `x -> sum_k a_k cos(0.2 k x) + b_k sin(0.2 k x)` for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl FourierSeries {
    /// Coefficients drawn uniformly on `[-range, range]`, `a_k` and `b_k`
    /// alternating per term.
    pub fn random<R: Rng + ?Sized>(terms: usize, range: f64, rng: &mut R) -> Self {
        let mut a = Vec::with_capacity(terms);
        let mut b = Vec::with_capacity(terms);
        for _ in 0..terms {
            a.push(uniform(rng, range));
            b.push(uniform(rng, range));
        }
        FourierSeries { a, b }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(k, (a, b))| {
                let t = FREQUENCY * (k + 1) as f64 * x;
                a * t.cos() + b * t.sin()
            })
            .sum()
    }
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, range: f64) -> f64 {
    let range = range.abs();
    rng.random_range(-range..=range)
}

/// Additive Fourier function over a set of parent covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierF0 {
    pub terms: Vec<(usize, FourierSeries)>,
}

impl FourierF0 {
    pub fn zero() -> Self {
        FourierF0 { terms: Vec::new() }
    }

    pub fn random<R: Rng + ?Sized>(parents: &[usize], terms: usize, range: f64, rng: &mut R) -> Self {
        FourierF0 { terms: parents.iter().map(|&j| (j, FourierSeries::random(terms, range, rng))).collect() }
    }

    pub fn eval_row(&self, row: &[f64]) -> f64 {
        self.terms.iter().map(|(j, s)| s.eval(row[*j])).sum()
    }

    pub fn parents(&self) -> Vec<usize> {
        self.terms.iter().map(|(j, _)| *j).collect()
    }

    /// The additive component belonging to `covariate`, zero for
    /// non-parents. This is the true partial dependence up to a constant.
    pub fn component(&self, covariate: usize, value: f64) -> f64 {
        self.terms.iter().filter(|(j, _)| *j == covariate).map(|(_, s)| s.eval(value)).sum()
    }
}

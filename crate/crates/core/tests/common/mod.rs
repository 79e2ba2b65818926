//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use sdforest::tree::{NodeKind, SdTree};
use sdforest::util::rng_from_seed;

/// Accepted split of the reference CART: `(covariate, threshold)`.
pub type CartSplit = (usize, f64);

#[derive(Debug)]
pub struct CartFit {
    pub splits: Vec<CartSplit>,
    /// Fitted value of every training sample.
    pub fitted: Vec<f64>,
}

fn sse(y: &[f64], idx: &[usize]) -> f64 {
    let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    idx.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

fn thresholds(values: &mut Vec<f64>, max_candidates: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mids: Vec<f64> = values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    let gaps = mids.len();
    if gaps <= max_candidates {
        return mids;
    }
    (0..max_candidates).map(|t| mids[(2 * t + 1) * gaps / (2 * max_candidates)]).collect()
}

/// Best-first greedy variance-reduction CART. Every step re-scores every leaf
/// by explicit two-pass sums of squares; the `<=` side becomes a new leaf
/// appended at the end and the split leaf keeps the rest. Ties within a
/// relative 1e-12 keep the earlier leaf, covariate and threshold.
pub fn greedy_cart(x: &DMatrix<f64>, y: &[f64], cp: f64, min_leaf: usize, max_candidates: usize) -> CartFit {
    let n = y.len();
    let mut leaves: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut splits = Vec::new();
    let l_init = sse(y, &leaves[0]) / n as f64;
    let norm = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let floor = (cp * l_init).max(1e-12 * l_init);
    if l_init > 1e-24 * norm {
        loop {
            let mut best: Option<(f64, usize, usize, f64)> = None;
            for (b, members) in leaves.iter().enumerate() {
                if members.len() < 2 * min_leaf {
                    continue;
                }
                let parent = sse(y, members);
                for j in 0..x.ncols() {
                    let mut values: Vec<f64> = members.iter().map(|&i| x[(i, j)]).collect();
                    for s in thresholds(&mut values, max_candidates) {
                        let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| x[(i, j)] <= s);
                        if l.len() < min_leaf || r.len() < min_leaf {
                            continue;
                        }
                        let gain = parent - sse(y, &l) - sse(y, &r);
                        let better = match best {
                            None => true,
                            Some((g, ..)) => gain > g + 1e-12 * g.abs(),
                        };
                        if better {
                            best = Some((gain, b, j, s));
                        }
                    }
                }
            }
            let Some((gain, b, j, s)) = best else { break };
            if !(gain / n as f64 > floor) {
                break;
            }
            let (l, r): (Vec<usize>, Vec<usize>) = leaves[b].iter().partition(|&&i| x[(i, j)] <= s);
            leaves[b] = r;
            leaves.push(l);
            splits.push((j, s));
        }
    }
    let mut fitted = vec![0.0; n];
    for members in &leaves {
        let m = members.iter().map(|&i| y[i]).sum::<f64>() / members.len() as f64;
        for &i in members {
            fitted[i] = m;
        }
    }
    CartFit { splits, fitted }
}

/// `min_c ||Q(y - P c)||^2 / n` for the partition given by `assignment`,
/// solved through the normal equations of the explicit operator.
pub fn dense_refit_loss(q: &DMatrix<f64>, y: &[f64], assignment: &[usize]) -> f64 {
    let n = y.len();
    let regions = assignment.iter().max().map_or(0, |m| m + 1);
    let mut p = DMatrix::zeros(n, regions);
    for (i, &m) in assignment.iter().enumerate() {
        p[(i, m)] = 1.0;
    }
    let qp = q * &p;
    let qy = q * DVector::from_column_slice(y);
    let gram = qp.transpose() * &qp;
    let rhs = qp.transpose() * &qy;
    let c = gram
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| gram.svd(true, true).solve(&rhs, 1e-12).expect("normal equations solvable"));
    (&qy - &qp * &c).norm_squared() / n as f64
}

/// Node reached by every row when splits with `order > last` are ignored.
pub fn partition_after(tree: &SdTree, x: &DMatrix<f64>, last: usize) -> Vec<usize> {
    (0..x.nrows())
        .map(|i| {
            let mut id = 0;
            loop {
                match tree.nodes[id].kind {
                    NodeKind::Split { covariate, threshold, order, left, right, .. } if order <= last => {
                        id = if x[(i, covariate)] <= threshold { left } else { right };
                    }
                    _ => return id,
                }
            }
        })
        .collect()
}

/// Relabels arbitrary ids as `0..k` in order of first appearance.
pub fn compact(ids: &[usize]) -> Vec<usize> {
    let mut seen: Vec<usize> = Vec::new();
    ids.iter()
        .map(|id| match seen.iter().position(|s| s == id) {
            Some(k) => k,
            None => {
                seen.push(*id);
                seen.len() - 1
            }
        })
        .collect()
}

pub fn gaussian_matrix(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Response with a step, a linear term and noise.
pub fn step_response(seed: u64, x: &DMatrix<f64>) -> Vec<f64> {
    let mut rng = rng_from_seed(seed ^ 0xABCD);
    (0..x.nrows())
        .map(|i| {
            let step = if x[(i, 0)] > 0.3 { 1.5 } else { -0.5 };
            step + 0.7 * x[(i, x.ncols() - 1)] + 0.4 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

pub fn relative_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

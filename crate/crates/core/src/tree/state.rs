//! Growing state of a spectrally deconfounded tree.
//!
//! The state keeps an orthonormal basis `u_1..u_M` of `span(Q P)` where `P`
//! is the region indicator matrix. Scoring a candidate indicator `e` then
//! reduces to
//!
//! ```text
//! alpha(e) = (e^T Q r)^2 / (||Q e||^2 - sum_l (e^T Q u_l)^2),   r = (I - Pi) Q Y
//! ```
//!
//! where `||Q e||^2 = |e| - sum_k (2 w_k - w_k^2) (U_k^T e)^2`. Both terms are
//! sums over the samples in `e`, so scanning a sorted covariate accumulates
//! them incrementally and each threshold costs `O(r + M)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spectral::SpectralTransform;

/// Directions whose deflated image is shorter than this are treated as
/// already contained in the span.
pub const COLLINEAR_TOLERANCE: f64 = 1e-10;

// Relative guard against cancellation in the incremental denominator.
const RELATIVE_DEGENERACY: f64 = 1e-12;

// Relative tie tolerance when comparing scores.
const TIE_TOLERANCE: f64 = 1e-12;

/// True when `score` beats `best` by more than the tie tolerance. Earlier
/// candidates win ties, so scan order encodes the tie-breaking rule.
pub fn improves(score: f64, best: f64) -> bool {
    score > best + TIE_TOLERANCE * best.abs()
}

/// A scored split of one region: samples with `x[covariate] <= threshold`
/// go to the new region.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub region: usize,
    pub covariate: usize,
    pub threshold: f64,
    pub score: f64,
    pub left_count: usize,
    region_revision: u64,
}

/// A split whose realized loss decrease has been computed but which has not
/// been applied yet.
#[derive(Debug, Clone)]
pub struct PendingSplit {
    pub candidate: SplitCandidate,
    /// Realized decrease of the spectral loss `||Q(Y - P c)||^2 / n`.
    pub decrease: f64,
    direction: Option<DVector<f64>>,
    state_revision: u64,
}

#[derive(Debug, Clone)]
struct Region {
    members: Vec<usize>,
    revision: u64,
}

pub struct PartitionState<'a> {
    x: &'a DMatrix<f64>,
    transform: &'a SpectralTransform,
    n: usize,
    ytilde: DVector<f64>,
    basis: Vec<DVector<f64>>,
    qbasis: Vec<DVector<f64>>,
    coefficients: Vec<f64>,
    residual: DVector<f64>,
    qresidual: Vec<f64>,
    // Row-major per-sample features: scaled active singular directions
    // followed by the entries of Q u_l for every basis vector.
    features: Vec<f64>,
    n_directions: usize,
    stride: usize,
    regions: Vec<Region>,
    levels: Vec<f64>,
    initial_loss: f64,
    current_loss: f64,
    revision: u64,
}

impl<'a> PartitionState<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &[f64], transform: &'a SpectralTransform) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::Shape { expected: n, found: y.len() });
        }
        if transform.n() != n {
            return Err(Error::Shape { expected: n, found: transform.n() });
        }
        if n < 2 {
            return Err(Error::Input("at least two samples are required".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("response is not finite at row {i}")));
        }

        let ytilde = transform.apply_unchecked(&DVector::from_column_slice(y));
        let directions = transform.active_basis();
        let weights = transform.active_weights();
        let n_directions = weights.len();
        let stride = n_directions + 16;
        let mut features = vec![0.0; n * stride];
        for (k, w) in weights.iter().enumerate() {
            let scale = (2.0 * w - w * w).max(0.0).sqrt();
            for i in 0..n {
                features[i * stride + k] = directions[(i, k)] * scale;
            }
        }

        let mut state = PartitionState {
            x,
            transform,
            n,
            residual: ytilde.clone(),
            ytilde,
            basis: Vec::new(),
            qbasis: Vec::new(),
            coefficients: Vec::new(),
            qresidual: Vec::new(),
            features,
            n_directions,
            stride,
            regions: vec![Region { members: (0..n).collect(), revision: 0 }],
            levels: vec![0.0],
            initial_loss: 0.0,
            current_loss: 0.0,
            revision: 0,
        };

        let ones = DVector::from_element(n, 1.0);
        if let Some((u, _)) = state.deflated_direction(&ones, n) {
            state.push_direction(u);
        } else {
            state.current_loss = state.residual.norm_squared() / n as f64;
            state.qresidual = state.transform.apply_unchecked(&state.residual).as_slice().to_vec();
        }
        state.initial_loss = state.current_loss;
        state.solve_levels();
        Ok(state)
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region_members(&self, region: usize) -> &[usize] {
        &self.regions[region].members
    }

    /// Region index of every sample.
    pub fn assignments(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (m, region) in self.regions.iter().enumerate() {
            for &i in &region.members {
                out[i] = m;
            }
        }
        out
    }

    /// Current least-squares levels, one per region.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn initial_loss(&self) -> f64 {
        self.initial_loss
    }

    pub fn current_loss(&self) -> f64 {
        self.current_loss
    }

    pub fn transformed_response(&self) -> &DVector<f64> {
        &self.ytilde
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    /// Loss from the basis identity `(||QY||^2 - sum_l (u_l^T QY)^2) / n`.
    pub fn basis_loss(&self) -> f64 {
        let total = self.ytilde.norm_squared();
        let explained: f64 = self.basis.iter().map(|u| u.dot(&self.ytilde).powi(2)).sum();
        (total - explained) / self.n as f64
    }

    /// Best split of `region` over `covariates`, or `None` when no split
    /// leaves `min_leaf` samples on both sides.
    ///
    /// Thresholds are midpoints between consecutive distinct values; when
    /// there are more than `max_candidates` of them an evenly spaced subset
    /// (by rank) is used. Ties go to the lowest covariate, then the smallest
    /// threshold.
    pub fn evaluate_region_splits(
        &self,
        region: usize,
        covariates: &[usize],
        min_leaf: usize,
        max_candidates: usize,
    ) -> Option<SplitCandidate> {
        let members = &self.regions.get(region)?.members;
        let m = members.len();
        let min_leaf = min_leaf.max(1);
        if m < 2 * min_leaf || max_candidates == 0 {
            return None;
        }
        let width = self.n_directions + self.basis.len();
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(m);
        let mut sums = vec![0.0; width];
        let mut best: Option<SplitCandidate> = None;

        for &j in covariates {
            sorted.clear();
            sorted.extend(members.iter().map(|&i| (self.x[(i, j)], i)));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let distinct = 1 + sorted.windows(2).filter(|w| w[1].0 > w[0].0).count();
            let gaps = distinct - 1;
            if gaps == 0 {
                continue;
            }
            let subsample = gaps > max_candidates;
            let mut next_pick = 0usize;
            let pick = |t: usize| (2 * t + 1) * gaps / (2 * max_candidates);

            sums.iter_mut().for_each(|s| *s = 0.0);
            let mut numerator = 0.0;
            let mut gap = 0usize;
            for pos in 0..m - 1 {
                let i = sorted[pos].1;
                numerator += self.qresidual[i];
                let row = &self.features[i * self.stride..i * self.stride + width];
                for (s, f) in sums.iter_mut().zip(row) {
                    *s += f;
                }
                let (value, next) = (sorted[pos].0, sorted[pos + 1].0);
                if next <= value {
                    continue;
                }
                let this_gap = gap;
                gap += 1;
                if subsample {
                    if next_pick >= max_candidates || pick(next_pick) != this_gap {
                        continue;
                    }
                    next_pick += 1;
                }
                let left = pos + 1;
                if left < min_leaf || m - left < min_leaf {
                    continue;
                }
                let denominator = left as f64 - sums.iter().map(|s| s * s).sum::<f64>();
                let degenerate = denominator <= COLLINEAR_TOLERANCE * COLLINEAR_TOLERANCE
                    || denominator <= RELATIVE_DEGENERACY * left as f64;
                let score = if degenerate { 0.0 } else { numerator * numerator / denominator };
                let better = match &best {
                    None => true,
                    Some(b) => improves(score, b.score),
                };
                if better {
                    best = Some(SplitCandidate {
                        region,
                        covariate: j,
                        threshold: (value + next) / 2.0,
                        score,
                        left_count: left,
                        region_revision: self.regions[region].revision,
                    });
                }
            }
        }
        best
    }

    fn check_candidate(&self, c: &SplitCandidate) -> Result<Vec<usize>> {
        let region = self
            .regions
            .get(c.region)
            .ok_or_else(|| Error::Consistency(format!("candidate refers to unknown region {}", c.region)))?;
        if region.revision != c.region_revision {
            return Err(Error::Consistency(format!(
                "candidate for region {} was scored before the region changed",
                c.region
            )));
        }
        if c.covariate >= self.x.ncols() {
            return Err(Error::Consistency(format!("covariate {} out of range", c.covariate)));
        }
        let left: Vec<usize> =
            region.members.iter().copied().filter(|&i| self.x[(i, c.covariate)] <= c.threshold).collect();
        if left.is_empty() || left.len() == region.members.len() {
            return Err(Error::Consistency(format!(
                "split of region {} at covariate {} <= {} does not divide it",
                c.region, c.covariate, c.threshold
            )));
        }
        Ok(left)
    }

    /// Unit vector of `(I - Pi) Q v` together with the image norm, or `None`
    /// when `Q v` lies in the current span.
    fn deflated_direction(&self, v: &DVector<f64>, support: usize) -> Option<(DVector<f64>, f64)> {
        let mut u = self.transform.apply_unchecked(v);
        // Two Gram-Schmidt passes keep the basis orthonormal to rounding.
        for _ in 0..2 {
            for b in &self.basis {
                let c = b.dot(&u);
                u.axpy(-c, b, 1.0);
            }
        }
        let norm = u.norm();
        if norm <= COLLINEAR_TOLERANCE || norm * norm <= RELATIVE_DEGENERACY * support as f64 {
            return None;
        }
        Some((u / norm, norm))
    }

    /// Computes the realized loss decrease of a scored candidate without
    /// changing the state.
    pub fn prepare_split(&self, candidate: &SplitCandidate) -> Result<PendingSplit> {
        let left = self.check_candidate(candidate)?;
        let mut e = DVector::zeros(self.n);
        for &i in &left {
            e[i] = 1.0;
        }
        let (direction, decrease) = match self.deflated_direction(&e, left.len()) {
            Some((u, _)) => {
                let beta = u.dot(&self.residual);
                (Some(u), beta * beta / self.n as f64)
            }
            None => (None, 0.0),
        };
        Ok(PendingSplit { candidate: candidate.clone(), decrease, direction, state_revision: self.revision })
    }

    fn push_direction(&mut self, u: DVector<f64>) {
        let beta = u.dot(&self.residual);
        let z = self.transform.apply_unchecked(&u);
        let col = self.n_directions + self.basis.len();
        if col >= self.stride {
            self.grow_features();
        }
        for i in 0..self.n {
            self.features[i * self.stride + col] = z[i];
        }
        self.residual.axpy(-beta, &u, 1.0);
        self.basis.push(u);
        self.qbasis.push(z);
        self.coefficients.push(beta);
        self.current_loss = self.residual.norm_squared() / self.n as f64;
        self.qresidual = self.transform.apply_unchecked(&self.residual).as_slice().to_vec();
    }

    fn grow_features(&mut self) {
        let new_stride = self.n_directions + 2 * (self.stride - self.n_directions);
        let mut features = vec![0.0; self.n * new_stride];
        for i in 0..self.n {
            features[i * new_stride..i * new_stride + self.stride]
                .copy_from_slice(&self.features[i * self.stride..(i + 1) * self.stride]);
        }
        self.features = features;
        self.stride = new_stride;
    }

    /// Applies a prepared split. The samples on the `<=` side form a new
    /// region with index `n_regions()`; the split region keeps the rest.
    /// Returns the index of the new region.
    pub fn commit_split(&mut self, pending: PendingSplit) -> Result<usize> {
        if pending.state_revision != self.revision {
            return Err(Error::Consistency("pending split is stale".into()));
        }
        let left = self.check_candidate(&pending.candidate)?;
        let b = pending.candidate.region;
        if let Some(u) = pending.direction {
            self.push_direction(u);
        }
        self.revision += 1;
        let revision = self.revision;
        let x = self.x;
        let (j, s) = (pending.candidate.covariate, pending.candidate.threshold);
        let region = &mut self.regions[b];
        region.members.retain(|&i| x[(i, j)] > s);
        region.revision = revision;
        self.regions.push(Region { members: left, revision });
        self.solve_levels();
        Ok(self.regions.len() - 1)
    }

    /// Prepares and applies a candidate unconditionally, returning the new
    /// region index and the realized loss decrease.
    pub fn accept_split(&mut self, candidate: &SplitCandidate) -> Result<(usize, f64)> {
        let pending = self.prepare_split(candidate)?;
        let decrease = pending.decrease;
        let new_region = self.commit_split(pending)?;
        Ok((new_region, decrease))
    }

    // Levels solve G c = beta with G[l][m] = (Q u_l)^T p_m, which holds because
    // Q P = U G when the columns of U span Q P.
    fn solve_levels(&mut self) {
        let k = self.basis.len();
        let m = self.regions.len();
        let mut g = DMatrix::zeros(k, m);
        for (l, z) in self.qbasis.iter().enumerate() {
            for (r, region) in self.regions.iter().enumerate() {
                g[(l, r)] = region.members.iter().map(|&i| z[i]).sum::<f64>();
            }
        }
        let beta = DVector::from_column_slice(&self.coefficients);
        let solved = if k == m && k > 0 {
            g.clone().lu().solve(&beta).filter(|c| c.iter().all(|v| v.is_finite()))
        } else {
            None
        };
        let levels = match solved {
            Some(c) => c,
            None => min_norm_solve(&g, &beta, m),
        };
        self.levels = levels.as_slice().to_vec();
    }
}

pub(crate) fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, cols: usize) -> DVector<f64> {
    if a.nrows() == 0 || a.iter().all(|&v| v == 0.0) {
        return DVector::zeros(cols);
    }
    let svd = a.clone().svd(true, true);
    let largest = svd.singular_values.max();
    svd.solve(b, 1e-12 * largest).unwrap_or_else(|_| DVector::zeros(cols))
}

//! Simulation studies with long-format tabular output.
//!
//! Every study derives one seed per replicate with [`mix_seed`], runs its
//! replicates in parallel and returns records in a canonical order, so the
//! result CSV is byte-identical for a fixed seed regardless of thread count.
//! Wall times are kept out of the result CSV for the same reason and are
//! written separately.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{fit_forest, variable_importance, ForestConfig, ForestModel};
use crate::io::{csv_string, fmt_f64};
use crate::simgen::{gen_linear, generate, F0Kind, PerturbationDraws, SimSpec};
use crate::spectral::{compute_svd, pca_transform, standardize_columns, trim_transform};
use crate::tree::{fit_sdtree, TreeConfig, Variant};
use crate::util::{mean, median, mix_seed, rng_from_seed};

pub const SDFOREST: &str = "sdforest";
pub const CLASSICAL: &str = "classical";

// Streams derived from a replicate seed.
const DATA_STREAM: u64 = 0;
const MODEL_STREAM: u64 = 1;
const PERTURB_STREAM: u64 = 2;

/// One measured value of one method in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub experiment: String,
    pub method: String,
    pub parameter: String,
    pub level: f64,
    pub replicate: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: String,
    pub parameter: String,
    pub level: f64,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub records: Vec<Record>,
}

impl ExperimentResult {
    pub const HEADER: [&'static str; 8] =
        ["experiment", "method", "parameter", "level", "replicate", "seed", "metric", "value"];

    /// Raw records without timings; deterministic for a fixed seed.
    pub fn results_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                vec![
                    r.experiment.clone(),
                    r.method.clone(),
                    r.parameter.clone(),
                    fmt_f64(r.level),
                    r.replicate.to_string(),
                    r.seed.to_string(),
                    r.metric.clone(),
                    fmt_f64(r.value),
                ]
            })
            .collect();
        csv_string(&Self::HEADER, &rows)
    }

    pub fn timings_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                vec![
                    r.experiment.clone(),
                    r.method.clone(),
                    fmt_f64(r.level),
                    r.replicate.to_string(),
                    r.metric.clone(),
                    format!("{:.6}", r.wall_seconds),
                ]
            })
            .collect();
        csv_string(&["experiment", "method", "level", "replicate", "metric", "wall_seconds"], &rows)
    }

    /// Median and mean per (method, parameter, level, metric), in order of
    /// first appearance.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut keys: Vec<(&str, &str, f64, &str)> = Vec::new();
        for r in &self.records {
            let key = (r.method.as_str(), r.parameter.as_str(), r.level, r.metric.as_str());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(method, parameter, level, metric)| {
                let values = self.values(method, level, metric);
                Aggregate {
                    method: method.to_string(),
                    parameter: parameter.to_string(),
                    level,
                    metric: metric.to_string(),
                    count: values.len(),
                    median: median(&values),
                    mean: mean(&values),
                }
            })
            .collect()
    }

    pub fn aggregates_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .aggregates()
            .into_iter()
            .map(|a| {
                vec![
                    self.experiment.clone(),
                    a.method,
                    a.parameter,
                    fmt_f64(a.level),
                    a.metric,
                    a.count.to_string(),
                    fmt_f64(a.median),
                    fmt_f64(a.mean),
                ]
            })
            .collect();
        csv_string(&["experiment", "method", "parameter", "level", "metric", "n", "median", "mean"], &rows)
    }

    /// Values of one arm ordered by replicate.
    pub fn values(&self, method: &str, level: f64, metric: &str) -> Vec<f64> {
        let mut found: Vec<(usize, f64)> = self
            .records
            .iter()
            .filter(|r| r.method == method && r.level == level && r.metric == metric)
            .map(|r| (r.replicate, r.value))
            .collect();
        found.sort_by_key(|v| v.0);
        found.into_iter().map(|v| v.1).collect()
    }

    pub fn median_of(&self, method: &str, level: f64, metric: &str) -> f64 {
        median(&self.values(method, level, metric))
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    Ok(())
}

fn f_mse(truth: &[f64], predicted: &[f64]) -> f64 {
    let sq: Vec<f64> = truth.iter().zip(predicted).map(|(t, p)| (t - p).powi(2)).collect();
    mean(&sq)
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Parameter varied by the dimension study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimParam {
    N,
    P,
    Q,
    Density,
}

impl DimParam {
    pub fn name(self) -> &'static str {
        match self {
            DimParam::N => "n",
            DimParam::P => "p",
            DimParam::Q => "q",
            DimParam::Density => "density",
        }
    }

    fn apply(self, spec: &SimSpec, value: f64) -> Result<SimSpec> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} must be a non-negative integer, got {value}", self.name())))
            }
        };
        let mut s = spec.clone();
        match self {
            DimParam::N => s.n = count()?,
            DimParam::P => s.p = count()?,
            DimParam::Q => s.q = count()?,
            DimParam::Density => s.density = value,
        }
        s.validate()?;
        Ok(s)
    }
}

impl std::str::FromStr for DimParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(DimParam::N),
            "p" => Ok(DimParam::P),
            "q" => Ok(DimParam::Q),
            "density" => Ok(DimParam::Density),
            other => Err(Error::Config(format!("cannot vary '{other}'; use n, p, q or density"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimsConfig {
    pub base: SimSpec,
    pub vary: DimParam,
    pub values: Vec<f64>,
    pub reps: usize,
    pub n_test: usize,
    /// Template for both methods; the classical arm swaps in the identity
    /// transform. `mtry` is left unset so it follows `floor(p / 2)`.
    pub forest: ForestConfig,
    pub seed: u64,
}

impl DimsConfig {
    /// Reduced scale: `n = p = 300`, 50 trees, 20 replicates.
    pub fn desk(vary: DimParam) -> Self {
        let values = match vary {
            DimParam::N | DimParam::P => vec![100.0, 200.0, 300.0, 400.0],
            DimParam::Q => vec![0.0, 5.0, 10.0, 20.0, 40.0],
            DimParam::Density => vec![0.1, 0.2, 0.4, 0.7, 1.0],
        };
        DimsConfig {
            base: SimSpec::desk(),
            vary,
            values,
            reps: 20,
            n_test: 500,
            forest: ForestConfig { n_trees: 50, ..ForestConfig::default() },
            seed: 0,
        }
    }

    /// Full scale: `n = p = 500`, 100 trees.
    pub fn full(vary: DimParam) -> Self {
        let values = match vary {
            DimParam::N | DimParam::P => vec![100.0, 200.0, 400.0, 600.0, 800.0, 1000.0],
            DimParam::Q => vec![0.0, 5.0, 10.0, 20.0, 40.0, 80.0],
            DimParam::Density => vec![0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
        };
        DimsConfig {
            base: SimSpec::dimension_study(),
            values,
            forest: ForestConfig { n_trees: 100, ..ForestConfig::default() },
            ..DimsConfig::desk(vary)
        }
    }
}

/// Test-set error of a sparse-confounding forest and a classical forest as
/// one simulation parameter varies. The data-generating process is redrawn
/// for every replicate; replicate `r` uses the same seed at every level.
pub fn bench_dims(config: &DimsConfig) -> Result<ExperimentResult> {
    check_reps(config.reps)?;
    if config.values.is_empty() {
        return Err(Error::Config("no parameter values given".into()));
    }
    let specs = config.values.iter().map(|&v| config.vary.apply(&config.base, v)).collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..specs.len()).flat_map(|v| (0..config.reps).map(move |r| (v, r))).collect();
    let records = tasks
        .into_par_iter()
        .map(|(v, r)| {
            let seed = mix_seed(config.seed, r as u64);
            let mut rng = rng_from_seed(mix_seed(seed, DATA_STREAM));
            let (process, train) = gen_linear(&specs[v], &mut rng)?;
            let test = process.draw(config.n_test, &mut rng);
            let sdf = ForestConfig { seed: mix_seed(seed, MODEL_STREAM), ..config.forest.clone() };
            let arms = [(SDFOREST, sdf.clone()), (CLASSICAL, sdf.classical())];
            arms.into_iter()
                .map(|(method, forest)| {
                    let (pred, wall) = timed(|| fit_forest(&train.x, &train.y, &forest)?.predict(&test.x))?;
                    Ok(Record {
                        experiment: "bench_dims".into(),
                        method: method.into(),
                        parameter: config.vary.name().into(),
                        level: config.values[v],
                        replicate: r,
                        seed,
                        metric: "f_mse".into(),
                        value: f_mse(&test.f0_values, &pred),
                        wall_seconds: wall,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { experiment: "bench_dims".into(), records: records.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Generator of the base data when no data set is supplied.
    pub base: SimSpec,
    pub tau_grid: Vec<f64>,
    pub reps: usize,
    pub forest: ForestConfig,
    pub seed: u64,
}

impl PerturbConfig {
    /// Unconfounded synthetic base data with `n = 300, p = 100`, 50 trees.
    pub fn desk() -> Self {
        PerturbConfig {
            base: SimSpec { n: 300, p: 100, q: 0, ..SimSpec::desk() },
            tau_grid: vec![0.0, 0.5, 1.0, 2.0],
            reps: 10,
            forest: ForestConfig { n_trees: 50, ..ForestConfig::default() },
            seed: 0,
        }
    }
}

fn oob_change(a: &(Vec<f64>, Vec<bool>), b: &(Vec<f64>, Vec<bool>)) -> f64 {
    let sq: Vec<f64> = (0..a.0.len()).filter(|&i| a.1[i] && b.1[i]).map(|i| (a.0[i] - b.0[i]).powi(2)).collect();
    mean(&sq)
}

fn fit_oob(x: &DMatrix<f64>, y: &[f64], config: &ForestConfig) -> Result<(Vec<f64>, Vec<bool>)> {
    let model: ForestModel = fit_forest(x, y, config)?;
    model.oob_predict(x)
}

/// Change of out-of-bag predictions when rank-one dense confounding of
/// strength `tau` is added to fixed base data. Draws and forest seeds are
/// shared across the grid within a replicate.
pub fn bench_perturb(config: &PerturbConfig, data: Option<(&DMatrix<f64>, &[f64])>) -> Result<ExperimentResult> {
    check_reps(config.reps)?;
    if config.tau_grid.is_empty() || config.tau_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("tau grid must be non-empty and finite".into()));
    }
    let generated;
    let (x, y) = match data {
        Some(d) => d,
        None => {
            generated = generate(&config.base)?.1;
            (&generated.x, generated.y.as_slice())
        }
    };
    let records = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let seed = mix_seed(config.seed, r as u64);
            let draws =
                PerturbationDraws::draw(x.nrows(), x.ncols(), &mut rng_from_seed(mix_seed(seed, PERTURB_STREAM)));
            let sdf = ForestConfig { seed: mix_seed(seed, MODEL_STREAM), ..config.forest.clone() };
            let arms = [(SDFOREST, sdf.clone()), (CLASSICAL, sdf.classical())];
            let record = |method: &str, level: f64, metric: &str, value: f64, wall: f64| Record {
                experiment: "bench_perturb".into(),
                method: method.into(),
                parameter: "tau".into(),
                level,
                replicate: r,
                seed,
                metric: metric.into(),
                value,
                wall_seconds: wall,
            };
            let mut baselines = Vec::new();
            let mut out = Vec::new();
            for (method, forest) in &arms {
                let (base, wall) = timed(|| fit_oob(x, y, forest))?;
                for &tau in &config.tau_grid {
                    if tau == 0.0 {
                        out.push(record(method, tau, "prediction_change", 0.0, wall));
                        continue;
                    }
                    let (xt, yt) = draws.apply(x, y, tau)?;
                    let (perturbed, wall) = timed(|| fit_oob(&xt, &yt, forest))?;
                    out.push(record(method, tau, "prediction_change", oob_change(&perturbed, &base), wall));
                }
                baselines.push(base);
            }
            out.push(record(
                "sdforest_vs_classical",
                0.0,
                "discrepancy",
                oob_change(&baselines[0], &baselines[1]),
                0.0,
            ));
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { experiment: "bench_perturb".into(), records: records.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub grid: Vec<(usize, usize)>,
    pub q: usize,
    pub sigma_nu: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig { grid: vec![(100, 100), (200, 200), (400, 400)], q: 20, sigma_nu: 0.1, reps: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRecord {
    pub n: usize,
    pub p: usize,
    pub replicate: usize,
    pub seed: u64,
    pub gap: f64,
    /// `gap * min(sqrt(n), sqrt(p))`.
    pub scaled_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    pub records: Vec<RateRecord>,
}

impl RateResult {
    pub fn results_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.p.to_string(),
                    r.replicate.to_string(),
                    r.seed.to_string(),
                    fmt_f64(r.gap),
                    fmt_f64(r.scaled_gap),
                ]
            })
            .collect();
        csv_string(&["n", "p", "replicate", "seed", "gap", "scaled_gap"], &rows)
    }

    /// `(n, p, median gap, median scaled gap)` per grid point.
    pub fn medians(&self) -> Vec<(usize, usize, f64, f64)> {
        let mut keys: Vec<(usize, usize)> = Vec::new();
        for r in &self.records {
            if !keys.contains(&(r.n, r.p)) {
                keys.push((r.n, r.p));
            }
        }
        keys.into_iter()
            .map(|(n, p)| {
                let arm: Vec<&RateRecord> = self.records.iter().filter(|r| r.n == n && r.p == p).collect();
                let gaps: Vec<f64> = arm.iter().map(|r| r.gap).collect();
                let scaled: Vec<f64> = arm.iter().map(|r| r.scaled_gap).collect();
                (n, p, median(&gaps), median(&scaled))
            })
            .collect()
    }

    pub fn aggregates_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .medians()
            .into_iter()
            .map(|(n, p, g, s)| vec![n.to_string(), p.to_string(), fmt_f64(g), fmt_f64(s)])
            .collect();
        csv_string(&["n", "p", "median_gap", "median_scaled_gap"], &rows)
    }
}

/// Distance between the transformed objective at the true function with and
/// without the confounding term:
/// `| ||Q(Y - f0)|| - ||Q nu|| | / sqrt(n)` with `Q` the trim transform of X.
pub fn rate_check(config: &RateConfig) -> Result<RateResult> {
    check_reps(config.reps)?;
    let tasks: Vec<(usize, usize)> =
        (0..config.grid.len()).flat_map(|g| (0..config.reps).map(move |r| (g, r))).collect();
    let records = tasks
        .into_par_iter()
        .map(|(g, r)| {
            let (n, p) = config.grid[g];
            let seed = mix_seed(config.seed, r as u64);
            let spec = SimSpec { n, p, q: config.q, sigma_nu: config.sigma_nu, n_parents: 1, ..SimSpec::desk() };
            let (process, data) = gen_linear(&spec, &mut rng_from_seed(mix_seed(seed, DATA_STREAM)))?;
            let q = trim_transform(&data.x, false)?;
            // Y - f0 from its components, so that q = 0 gives exactly nu.
            let noise = DVector::from_column_slice(&data.nu);
            let confounded = &data.h * &process.delta + &noise;
            let gap = (q.apply(&confounded)?.norm() - q.apply(&noise)?.norm()).abs() / (n as f64).sqrt();
            Ok(RateRecord { n, p, replicate: r, seed, gap, scaled_gap: gap * (n.min(p) as f64).sqrt() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateResult { records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub spec: SimSpec,
    pub reps: usize,
    pub cp: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for VariantConfig {
    /// Random-tree `f0`, `n = p = 300`, `q = 20`, 50 paired instances.
    fn default() -> Self {
        VariantConfig {
            spec: SimSpec { f0: F0Kind::RandomTree, ..SimSpec::desk() },
            reps: 50,
            cp: 0.01,
            n_test: 500,
            seed: 0,
        }
    }
}

/// Single trees grown with both cache variants on the same data. Records
/// the training spectral loss and the test `f_mse` of each.
pub fn variant_study(config: &VariantConfig) -> Result<ExperimentResult> {
    check_reps(config.reps)?;
    let records = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let seed = mix_seed(config.seed, r as u64);
            let mut rng = rng_from_seed(mix_seed(seed, DATA_STREAM));
            let (process, train) = gen_linear(&config.spec, &mut rng)?;
            let test = process.draw(config.n_test, &mut rng);
            let transform = trim_transform(&train.x, false)?;
            let mut out = Vec::new();
            for variant in [Variant::Sdt1, Variant::Sdt2] {
                let tree_config = TreeConfig { cp: config.cp, variant, ..TreeConfig::default() };
                let mut tree_rng = rng_from_seed(mix_seed(seed, MODEL_STREAM));
                let (tree, wall) = timed(|| fit_sdtree(&train.x, &train.y, &transform, &tree_config, &mut tree_rng))?;
                let pred = tree.predict(&test.x)?;
                let loss = tree.metadata.final_loss.unwrap_or(f64::NAN);
                for (metric, value) in [("train_loss", loss), ("f_mse", f_mse(&test.f0_values, &pred))] {
                    out.push(Record {
                        experiment: "variant_study".into(),
                        method: variant.to_string(),
                        parameter: "cp".into(),
                        level: config.cp,
                        replicate: r,
                        seed,
                        metric: metric.into(),
                        value,
                        wall_seconds: wall,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { experiment: "variant_study".into(), records: records.into_iter().flatten().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub spec: SimSpec,
    pub reps: usize,
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for ScreeningConfig {
    /// `n = 500, p = 200, q = 20`, 100 trees, 20 replicates.
    fn default() -> Self {
        ScreeningConfig {
            spec: SimSpec { n: 500, p: 200, ..SimSpec::desk() },
            reps: 20,
            forest: ForestConfig::default(),
            seed: 0,
        }
    }
}

/// One-based importance rank of the best-ranked true parent. Ties count
/// against the parent.
pub fn best_parent_rank(importance: &[f64], parents: &[usize]) -> usize {
    parents
        .iter()
        .map(|&j| 1 + importance.iter().enumerate().filter(|&(k, v)| k != j && *v >= importance[j]).count())
        .min()
        .unwrap_or(importance.len())
}

/// Whether the importance of either method ranks a true parent near the top.
pub fn screening_study(config: &ScreeningConfig) -> Result<ExperimentResult> {
    check_reps(config.reps)?;
    let records = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let seed = mix_seed(config.seed, r as u64);
            let (_, data) = gen_linear(&config.spec, &mut rng_from_seed(mix_seed(seed, DATA_STREAM)))?;
            let sdf = ForestConfig { seed: mix_seed(seed, MODEL_STREAM), ..config.forest.clone() };
            [(SDFOREST, sdf.clone()), (CLASSICAL, sdf.classical())]
                .into_iter()
                .map(|(method, forest)| {
                    let (model, wall) = timed(|| fit_forest(&data.x, &data.y, &forest))?;
                    let rank = best_parent_rank(&variable_importance(&model), &data.parents);
                    Ok(Record {
                        experiment: "screening".into(),
                        method: method.into(),
                        parameter: "q".into(),
                        level: config.spec.q as f64,
                        replicate: r,
                        seed,
                        metric: "best_parent_rank".into(),
                        value: rank as f64,
                        wall_seconds: wall,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { experiment: "screening".into(), records: records.into_iter().flatten().collect() })
}

/// Singular values of `X`, `Q_trim X` and `Q_pca X`, padded with zeros to a
/// common length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub raw: Vec<f64>,
    pub trim: Vec<f64>,
    pub pca: Vec<f64>,
}

impl Spectrum {
    pub fn csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = (0..self.raw.len())
            .map(|i| vec![(i + 1).to_string(), fmt_f64(self.raw[i]), fmt_f64(self.trim[i]), fmt_f64(self.pca[i])])
            .collect();
        csv_string(&["index", "raw", "trim", "pca"], &rows)
    }
}

fn padded_singular_values(m: &DMatrix<f64>, len: usize) -> Result<Vec<f64>> {
    let mut d = match compute_svd(m) {
        Ok(svd) => svd.d.as_slice().to_vec(),
        Err(Error::DegenerateRank(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    d.resize(len, 0.0);
    Ok(d)
}

pub fn spectrum(x: &DMatrix<f64>, scale_columns: bool, q_remove: usize) -> Result<Spectrum> {
    let design = if scale_columns { standardize_columns(x)? } else { x.clone() };
    let raw = compute_svd(&design)?.d.as_slice().to_vec();
    let len = raw.len();
    let trim = trim_transform(&design, false)?.apply_matrix(&design)?;
    let pca = pca_transform(&design, q_remove, false)?.apply_matrix(&design)?;
    Ok(Spectrum { trim: padded_singular_values(&trim, len)?, pca: padded_singular_values(&pca, len)?, raw })
}

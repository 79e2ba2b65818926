//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary.
//! With `SDFOREST_ACCEPTANCE_STRICT=1` any failing criterion also makes the
//! process exit with a non-zero status.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 1 3`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;

use common::*;
use sdforest::experiments::{
    bench_dims, bench_perturb, rate_check, screening_study, variant_study, DimParam, DimsConfig, PerturbConfig,
    RateConfig, ScreeningConfig, VariantConfig, CLASSICAL, SDFOREST,
};
use sdforest::forest::{regularization_paths, stability_paths};
use sdforest::simgen::{gen_linear, SimSpec};
use sdforest::spectral::trim_transform;
use sdforest::tree::{improves, PartitionState, SplitCandidate};
use sdforest::util::{median, rng_from_seed, with_threads};
use sdforest::{fit_forest, fit_sdtree, ForestConfig, SpectralTransform, TransformSpec, TreeConfig, Variant};

type Verdict = Result<String, String>;

/// `(number, short name, check)`.
type Criterion = (u32, &'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Criterion 1: identity transform reproduces greedy CART exactly.
fn cart_equivalence() -> Verdict {
    let instances = 200;
    let mut total = 0;
    for k in 0..instances {
        let mut rng = rng_from_seed(1_000 + k);
        let n = rng.random_range(12..=50);
        let p = rng.random_range(1..=5);
        let min_leaf = rng.random_range(1..=5);
        let cp = [0.0, 0.001, 0.01, 0.05][rng.random_range(0..4)];
        let max_candidates = if rng.random_bool(0.3) { rng.random_range(3..=10) } else { 100 };
        let variant = if k % 2 == 0 { Variant::Sdt1 } else { Variant::Sdt2 };
        let mut x = gaussian_matrix(k, n, p);
        if k % 3 == 0 {
            // Coarse grid values produce repeated covariate values.
            x.apply(|v| *v = (*v * 4.0).round() / 4.0);
        }
        let y = step_response(k, &x);
        let config = TreeConfig { cp, min_leaf, max_candidates, variant, max_splits: None, mtry: Some(p) };
        let tree = fit_sdtree(&x, &y, &SpectralTransform::identity(n), &config, &mut rng_from_seed(k))
            .map_err(|e| format!("instance {k}: {e}"))?;
        let oracle = greedy_cart(&x, &y, cp, min_leaf, max_candidates);
        let sequence: Vec<(usize, f64)> = tree.split_sequence().iter().map(|s| (s.1, s.2)).collect();
        if sequence != oracle.splits {
            return Err(format!("instance {k}: split sequence {sequence:?} != oracle {:?}", oracle.splits));
        }
        let fitted = tree.predict(&x).map_err(|e| e.to_string())?;
        let worst = fitted.iter().zip(&oracle.fitted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if worst > 1e-10 {
            return Err(format!("instance {k}: leaf levels differ by {worst:e}"));
        }
        total += sequence.len();
    }
    Ok(format!("{instances} instances, {total} splits, identical split sequences, levels within 1e-10"))
}

fn best_candidate(state: &PartitionState, p: usize) -> Option<SplitCandidate> {
    let covariates: Vec<usize> = (0..p).collect();
    let mut best: Option<SplitCandidate> = None;
    for b in 0..state.n_regions() {
        if let Some(c) = state.evaluate_region_splits(b, &covariates, 5, 100) {
            if best.as_ref().is_none_or(|a| improves(c.score, a.score)) {
                best = Some(c);
            }
        }
    }
    best
}

/// Criterion 2: incremental scores and losses agree with explicit refits.
fn subroutine_exactness() -> Verdict {
    let instances = 100;
    let mut checked = 0usize;
    for k in 0..instances {
        let mut rng = rng_from_seed(2_000 + k);
        let n = rng.random_range(20..=80);
        let p = rng.random_range(2..=10);
        let x = gaussian_matrix(50_000 + k, n, p);
        let y = step_response(k, &x);
        let t = trim_transform(&x, false).map_err(|e| e.to_string())?;
        let q = t.materialize();

        let mut state = PartitionState::new(&x, &y, &t).map_err(|e| e.to_string())?;
        let mut before = dense_refit_loss(&q, &y, &state.assignments());
        for _ in 0..12 {
            let Some(c) = best_candidate(&state, p) else { break };
            if c.score / (n as f64) <= 0.01 * state.initial_loss() {
                break;
            }
            state.accept_split(&c).map_err(|e| e.to_string())?;
            let after = dense_refit_loss(&q, &y, &state.assignments());
            let refit_decrease = n as f64 * (before - after);
            if !relative_close(c.score, refit_decrease, 1e-8) {
                return Err(format!("instance {k}: alpha {} vs refit {}", c.score, refit_decrease));
            }
            if !relative_close(state.basis_loss(), after, 1e-8) || !relative_close(state.current_loss(), after, 1e-8) {
                return Err(format!(
                    "instance {k}: tracked loss {} / {} vs refit {after}",
                    state.basis_loss(),
                    state.current_loss()
                ));
            }
            before = after;
            checked += 1;
        }

        // The recorded decreases of a grown tree replay under the refit too.
        let tree = fit_sdtree(&x, &y, &t, &TreeConfig::default(), &mut rng_from_seed(k)).map_err(|e| e.to_string())?;
        let mut previous = dense_refit_loss(&q, &y, &vec![0; n]);
        for (order, _, _, d) in tree.split_sequence() {
            let current = dense_refit_loss(&q, &y, &compact(&partition_after(&tree, &x, order)));
            if !relative_close(previous - current, d, 1e-8) {
                return Err(format!("instance {k}: recorded decrease {d} vs refit {}", previous - current));
            }
            previous = current;
            checked += 1;
        }
        if !relative_close(tree.metadata.final_loss.unwrap_or(f64::NAN), previous, 1e-8) {
            return Err(format!("instance {k}: final loss mismatch"));
        }
    }
    Ok(format!("{instances} instances, {checked} accepted splits within 1e-8 relative"))
}

fn singular_values_by_eigen(m: &DMatrix<f64>) -> Vec<f64> {
    let gram = if m.nrows() >= m.ncols() { m.transpose() * m } else { m * m.transpose() };
    let mut d: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    d
}

/// Criterion 3: trim transform caps singular values at their median.
fn trim_correctness() -> Verdict {
    for k in 0..50u64 {
        let mut rng = rng_from_seed(3_000 + k);
        let n = rng.random_range(4..=60);
        let p = rng.random_range(2..=60);
        let x = gaussian_matrix(3_000 + k, n, p) * rng.random_range(0.1..10.0);
        let t = trim_transform(&x, false).map_err(|e| e.to_string())?;
        let d = singular_values_by_eigen(&x);
        let r = n.min(p);
        let tau = median(&d[..r]);
        let scale = d[0].max(1.0);
        let qd = singular_values_by_eigen(&t.apply_matrix(&x).map_err(|e| e.to_string())?);
        for i in 0..r {
            let expected = d[i].min(tau);
            if (qd[i] - expected).abs() > 1e-8 * scale {
                return Err(format!("matrix {k}: singular value {i} is {} not {expected}", qd[i]));
            }
            if d[i] < tau && (qd[i] - d[i]).abs() > 1e-8 * scale {
                return Err(format!("matrix {k}: value below tau changed"));
            }
        }
        let eig = t.materialize().symmetric_eigenvalues();
        if eig.iter().any(|&e| !(-1e-10..=1.0 + 1e-10).contains(&e)) {
            return Err(format!("matrix {k}: Q eigenvalue outside [0, 1]"));
        }
    }
    Ok("50 matrices, singular values of QX = min(d, tau) within 1e-8, eigenvalues of Q in [0, 1]".into())
}

fn density_study() -> Result<sdforest::experiments::ExperimentResult, String> {
    let config = DimsConfig { values: vec![0.1, 0.4, 1.0], reps: 20, seed: 4, ..DimsConfig::desk(DimParam::Density) };
    bench_dims(&config).map_err(|e| e.to_string())
}

/// Criteria 4 and 6 share the density study; density 1.0 is the preset.
fn confounded_and_density() -> (Verdict, Verdict) {
    let result = match density_study() {
        Ok(r) => r,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let sdf = result.values(SDFOREST, 1.0, "f_mse");
    let cl = result.values(CLASSICAL, 1.0, "f_mse");
    let wins = sdf.iter().zip(&cl).filter(|(a, b)| a < b).count();
    let (ms, mc) = (median(&sdf), median(&cl));
    let four = check(
        ms < mc && wins >= 15 && sdf.len() == 20,
        format!("median f_mse sdforest {ms:.4} vs classical {mc:.4}, paired wins {wins}/20"),
    );

    let levels = [0.1, 0.4, 1.0];
    let medians: Vec<(f64, f64)> = levels
        .iter()
        .map(|&d| (result.median_of(SDFOREST, d, "f_mse"), result.median_of(CLASSICAL, d, "f_mse")))
        .collect();
    let non_increasing = medians.windows(2).all(|w| w[1].0 <= w[0].0);
    let beats = medians.iter().all(|(s, c)| s < c);
    let six = check(
        non_increasing && beats,
        format!(
            "medians by density (sdforest, classical): {}",
            levels
                .iter()
                .zip(&medians)
                .map(|(d, (s, c))| format!("{d}: ({s:.4}, {c:.4})"))
                .collect::<Vec<_>>()
                .join("; ")
        ),
    );
    (four, six)
}

/// Criterion 5: without confounding both forests perform alike.
fn unconfounded_parity() -> Verdict {
    let config = DimsConfig { values: vec![0.0], reps: 20, seed: 5, ..DimsConfig::desk(DimParam::Q) };
    let result = bench_dims(&config).map_err(|e| e.to_string())?;
    let ratio = result.median_of(SDFOREST, 0.0, "f_mse") / result.median_of(CLASSICAL, 0.0, "f_mse");
    check((0.7..=1.4).contains(&ratio), format!("median f_mse ratio {ratio:.3}"))
}

/// Criterion 7: a true parent ranks near the top of the importance.
fn screening() -> Verdict {
    let result =
        screening_study(&ScreeningConfig { seed: 7, ..ScreeningConfig::default() }).map_err(|e| e.to_string())?;
    let s = result.median_of(SDFOREST, 20.0, "best_parent_rank");
    let c = result.median_of(CLASSICAL, 20.0, "best_parent_rank");
    check(s <= 5.0 && s < c, format!("median best parent rank sdforest {s} vs classical {c}"))
}

/// Criterion 8: predictions of the deconfounded forest barely move.
fn perturbation() -> Verdict {
    let config = PerturbConfig { seed: 8, ..PerturbConfig::desk() };
    let result = bench_perturb(&config, None).map_err(|e| e.to_string())?;
    let taus = &config.tau_grid;
    let cl: Vec<f64> = taus.iter().map(|&t| result.median_of(CLASSICAL, t, "prediction_change")).collect();
    let sdf: Vec<f64> = taus.iter().map(|&t| result.median_of(SDFOREST, t, "prediction_change")).collect();
    let increasing = cl.windows(2).all(|w| w[1] > w[0]);
    let last = taus.len() - 1;
    check(increasing && sdf[last] <= 0.5 * cl[last], format!("median change classical {cl:.4?}, sdforest {sdf:.4?}"))
}

/// Criterion 9: the confounding remainder shrinks like 1 / min(sqrt n, sqrt p).
fn rate() -> Verdict {
    let result = rate_check(&RateConfig { seed: 9, ..RateConfig::default() }).map_err(|e| e.to_string())?;
    let medians = result.medians();
    let gaps: Vec<f64> = medians.iter().map(|m| m.2).collect();
    let scaled: Vec<f64> = medians.iter().map(|m| m.3).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let spread = scaled.iter().copied().fold(f64::MIN, f64::max) / scaled.iter().copied().fold(f64::MAX, f64::min);
    check(decreasing && spread < 2.0, format!("median gaps {gaps:.4?}, scaled {scaled:.3?}, spread factor {spread:.3}"))
}

/// Criterion 10: refreshing every region never hurts the training loss.
fn variants() -> Verdict {
    let result = variant_study(&VariantConfig { seed: 10, ..VariantConfig::default() }).map_err(|e| e.to_string())?;
    let l1 = result.values("SDT1", 0.01, "train_loss");
    let l2 = result.values("SDT2", 0.01, "train_loss");
    let violations: Vec<usize> = (0..l1.len()).filter(|&i| l2[i] > l1[i]).collect();
    let m1 = result.median_of("SDT1", 0.01, "f_mse");
    let m2 = result.median_of("SDT2", 0.01, "f_mse");
    let ratio = m1.max(m2) / m1.min(m2);
    check(
        violations.is_empty() && l1.len() == 50 && ratio <= 1.2,
        format!(
            "SDT2 loss > SDT1 loss on {} of {} instances {violations:?}; f_mse medians SDT1 {m1:.4}, SDT2 {m2:.4} (ratio {ratio:.3})",
            violations.len(),
            l1.len()
        ),
    )
}

fn deterministic_outputs() -> Result<Vec<String>, String> {
    let base = SimSpec { n: 60, p: 20, q: 3, ..SimSpec::desk() };
    let forest = ForestConfig { n_trees: 6, ..ForestConfig::default() };
    let (_, data) = gen_linear(&base, &mut rng_from_seed(11)).map_err(|e| e.to_string())?;
    let model =
        fit_forest(&data.x, &data.y, &ForestConfig { seed: 11, ..forest.clone() }).map_err(|e| e.to_string())?;
    let dims = bench_dims(&DimsConfig {
        base: base.clone(),
        values: vec![0.0, 3.0],
        reps: 3,
        n_test: 50,
        forest: forest.clone(),
        ..DimsConfig::desk(DimParam::Q)
    });
    let perturb = bench_perturb(
        &PerturbConfig {
            base: SimSpec { q: 0, ..base.clone() },
            reps: 3,
            forest: forest.clone(),
            ..PerturbConfig::desk()
        },
        None,
    );
    let variant = variant_study(&VariantConfig { spec: base.clone(), reps: 3, n_test: 50, ..VariantConfig::default() });
    let rate = rate_check(&RateConfig { grid: vec![(40, 30), (60, 50)], reps: 3, ..RateConfig::default() });
    let screening = screening_study(&ScreeningConfig { spec: base, reps: 2, forest, seed: 1 });
    let e = |e: sdforest::Error| e.to_string();
    Ok(vec![
        model.to_json().map_err(e)?,
        dims.and_then(|r| r.results_csv()).map_err(e)?,
        perturb.and_then(|r| r.results_csv()).map_err(e)?,
        variant.and_then(|r| r.results_csv()).map_err(e)?,
        rate.and_then(|r| r.results_csv()).map_err(e)?,
        screening.and_then(|r| r.results_csv()).map_err(e)?,
    ])
}

/// Criterion 11: outputs do not depend on runs or worker counts.
fn determinism() -> Verdict {
    let run = |threads| with_threads(Some(threads), deterministic_outputs).map_err(|e| e.to_string())?;
    let one = run(1)?;
    let eight = run(8)?;
    let again = run(8)?;
    let names = ["model", "bench_dims", "bench_perturb", "variant_study", "rate_check", "screening"];
    for (k, name) in names.iter().enumerate() {
        if one[k] != eight[k] || eight[k] != again[k] {
            return Err(format!("{name} output differs between runs"));
        }
    }
    Ok(format!("{} artifacts byte-identical across 1 and 8 workers and repeated runs", names.len()))
}

/// Criterion 12: importance and stability paths never increase along cp.
fn path_monotonicity() -> Verdict {
    let grid: Vec<f64> = (0..20).map(|k| 1e-4 * 10f64.powf(k as f64 * 3.5 / 19.0)).collect();
    let mut runner = TestRunner::new(PropConfig { cases: 10, failure_persistence: None, ..PropConfig::default() });
    let strategy = (any::<u64>(), 40usize..120, 3usize..12, prop::bool::ANY);
    runner
        .run(&strategy, |(seed, n, p, identity)| {
            let spec = SimSpec { n, p, q: 2, n_parents: 2, seed, ..SimSpec::desk() };
            let (_, data) = gen_linear(&spec, &mut rng_from_seed(seed)).unwrap();
            let transform = if identity { TransformSpec::identity() } else { TransformSpec::trim() };
            let config = ForestConfig { n_trees: 10, seed, transform, ..ForestConfig::default() };
            let model = fit_forest(&data.x, &data.y, &config).unwrap();
            let imp = regularization_paths(&model, &grid).unwrap();
            let pi = stability_paths(&model, &grid).unwrap();
            for k in 1..grid.len() {
                for j in 0..p {
                    prop_assert!(imp[k][j] <= imp[k - 1][j], "importance increased at cp {}", grid[k]);
                    prop_assert!(pi[k][j] <= pi[k - 1][j], "stability increased at cp {}", grid[k]);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("10 random forests, 20-point cp grid, both paths non-increasing".into())
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    })
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| selected.is_empty() || selected.contains(&id);
    let mut failures = 0;
    let mut report = |id: u32, name: &str, verdict: Verdict, seconds: f64| {
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {id:>2} [{name}] {detail} ({seconds:.1}s)");
    };

    let single: [Criterion; 10] = [
        (1, "oracle equivalence", cart_equivalence),
        (2, "subroutine exactness", subroutine_exactness),
        (3, "trim transform", trim_correctness),
        (5, "unconfounded parity", unconfounded_parity),
        (7, "screening", screening),
        (8, "perturbation robustness", perturbation),
        (9, "rate check", rate),
        (10, "variant study", variants),
        (11, "determinism", determinism),
        (12, "path monotonicity", path_monotonicity),
    ];
    for (id, name, f) in single.iter().take(3) {
        if wanted(*id) {
            let start = Instant::now();
            report(*id, name, guarded(f), start.elapsed().as_secs_f64());
        }
    }
    if wanted(4) || wanted(6) {
        let start = Instant::now();
        let (four, six) =
            catch_unwind(confounded_and_density).unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
        let seconds = start.elapsed().as_secs_f64();
        if wanted(4) {
            report(4, "confounded superiority", four, seconds);
        }
        if wanted(6) {
            report(6, "density trend", six, seconds);
        }
    }
    for (id, name, f) in single.iter().skip(3) {
        if wanted(*id) {
            let start = Instant::now();
            report(*id, name, guarded(f), start.elapsed().as_secs_f64());
        }
    }
    println!("acceptance summary: {failures} failing criteria");
    let strict = std::env::var("SDFOREST_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failures > 0 && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::tree::NodeKind;
use crate::util::with_threads;

fn data(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = (0..n).map(|i| (x[(i, 0)]).sin() * 2.0 + x[(i, 1)] + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
    (x, y)
}

fn small_config(n_trees: usize) -> ForestConfig {
    ForestConfig { n_trees, seed: 42, ..ForestConfig::default() }
}

#[test]
fn single_tree_forest_predicts_like_its_tree() {
    let (x, y) = data(1, 60, 4);
    let model = fit_forest(&x, &y, &small_config(1)).unwrap();
    assert_eq!(model.predict(&x).unwrap(), model.trees[0].predict(&x).unwrap());
}

#[test]
fn stump_forest_averages_bootstrap_means() {
    let (x, y) = data(2, 50, 3);
    let config = ForestConfig { transform: TransformSpec::identity(), cp: 10.0, ..small_config(7) };
    let model = fit_forest(&x, &y, &config).unwrap();
    let expected: f64 =
        model.bags.iter().map(|bag| bag.iter().map(|&i| y[i]).sum::<f64>() / bag.len() as f64).sum::<f64>() / 7.0;
    for v in model.predict(&x).unwrap() {
        assert_relative_eq!(v, expected, max_relative = 1e-10);
    }
}

#[test]
fn fitting_is_independent_of_worker_count() {
    let (x, y) = data(3, 60, 5);
    let config = ForestConfig { mtry: Some(2), ..small_config(6) };
    let one = with_threads(Some(1), || fit_forest(&x, &y, &config)).unwrap().unwrap();
    let many = with_threads(Some(4), || fit_forest(&x, &y, &config)).unwrap().unwrap();
    assert_eq!(one.to_json().unwrap(), many.to_json().unwrap());
}

#[test]
fn bags_have_configured_size() {
    let (x, y) = data(4, 40, 3);
    let model = fit_forest(&x, &y, &ForestConfig { sample_size: Some(25), ..small_config(3) }).unwrap();
    assert!(model.bags.iter().all(|b| b.len() == 25 && b.iter().all(|&i| i < 40)));
    let model = fit_forest(&x, &y, &small_config(3)).unwrap();
    assert!(model.bags.iter().all(|b| b.len() == 40));
}

#[test]
fn prediction_is_tree_mean() {
    let (x, y) = data(5, 60, 4);
    let model = fit_forest(&x, &y, &small_config(5)).unwrap();
    let per_tree = model.predict_trees(&x).unwrap();
    let pred = model.predict(&x).unwrap();
    for i in 0..60 {
        let naive: f64 = per_tree.iter().map(|t| t[i]).sum::<f64>() / 5.0;
        assert!((pred[i] - naive).abs() <= 1e-12 * (1.0 + naive.abs()));
    }
    let mut doubled = model.clone();
    doubled.trees.extend(model.trees.iter().cloned());
    doubled.bags.extend(model.bags.iter().cloned());
    for (a, b) in doubled.predict(&x).unwrap().iter().zip(&pred) {
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
}

#[test]
fn two_constant_trees_average() {
    let (x, y) = data(6, 30, 2);
    let mut model = fit_forest(&x, &y, &small_config(2)).unwrap();
    for (tree, c) in model.trees.iter_mut().zip([1.5, -0.5]) {
        *tree = tree.prune(f64::INFINITY).unwrap();
        tree.nodes[0].kind = NodeKind::Leaf { value: c };
    }
    assert!(model.predict(&x).unwrap().iter().all(|&v| v == 0.5));
}

#[test]
fn oob_uses_only_excluding_trees() {
    let (x, y) = data(7, 50, 3);
    let model = fit_forest(&x, &y, &small_config(1)).unwrap();
    let (oob, covered) = model.oob_predict(&x).unwrap();
    let full = model.predict(&x).unwrap();
    for i in 0..50 {
        let in_bag = model.bags[0].contains(&i);
        assert_eq!(covered[i], !in_bag);
        if in_bag {
            assert!(oob[i].is_nan());
        } else {
            assert_eq!(oob[i], full[i]);
        }
    }
}

#[test]
fn oob_covers_everything_with_many_trees() {
    let (x, y) = data(8, 50, 3);
    let model = fit_forest(&x, &y, &ForestConfig { max_splits: Some(3), ..small_config(100) }).unwrap();
    let (_, covered) = model.oob_predict(&x).unwrap();
    assert!(covered.iter().all(|&c| c));
}

#[test]
fn oob_matches_full_prediction_on_held_out_rows() {
    let (x, y) = data(9, 60, 3);
    let held: Vec<usize> = (0..10).collect();
    let bags: Vec<Vec<usize>> = (0..4).map(|t| (10..60).filter(|i| i % 4 != t).collect()).collect();
    let model = fit_forest_on_bags(&x, &y, &small_config(4), bags).unwrap();
    let (oob, covered) = model.oob_predict(&x).unwrap();
    let full = model.predict(&x).unwrap();
    for &i in &held {
        assert!(covered[i]);
        assert_relative_eq!(oob[i], full[i], max_relative = 1e-12);
    }
}

#[test]
fn importance_properties() {
    let (x, y) = data(10, 80, 5);
    let single = fit_forest(&x, &y, &ForestConfig { mtry: Some(5), ..small_config(1) }).unwrap();
    let tree = &single.trees[0];
    assert_eq!(variable_importance(&single), tree.variable_importance());
    let total: f64 = tree.variable_importance().iter().sum();
    let reduction = tree.metadata.initial_loss - tree.metadata.final_loss.unwrap();
    assert!((total - reduction).abs() <= 1e-10 * (1.0 + reduction.abs()));
    let used = tree.used_covariates();
    for (imp, u) in tree.variable_importance().iter().zip(used) {
        assert!(*imp >= 0.0);
        if !u {
            assert_eq!(*imp, 0.0);
        }
    }
}

#[test]
fn paths_are_monotone_and_consistent() {
    let (x, y) = data(11, 80, 5);
    let model = fit_forest(&x, &y, &ForestConfig { cp: 0.001, ..small_config(8) }).unwrap();
    let at_fit = regularization_paths(&model, &[0.001]).unwrap();
    assert_eq!(at_fit[0], variable_importance(&model));
    let grid: Vec<f64> = (0..20).map(|k| 0.001 * 1.5f64.powi(k)).collect();
    let imp = regularization_paths(&model, &grid).unwrap();
    let pi = stability_paths(&model, &grid).unwrap();
    for k in 1..grid.len() {
        for j in 0..5 {
            assert!(imp[k][j] <= imp[k - 1][j]);
            assert!(pi[k][j] <= pi[k - 1][j]);
        }
    }
    let beyond = regularization_paths(&model, &[1.0]).unwrap();
    assert!(beyond[0].iter().all(|&v| v == 0.0));
    let usage = stability_paths(&model, &[0.0]).unwrap();
    for (j, &u) in usage[0].iter().enumerate() {
        let fraction = model.trees.iter().filter(|t| t.used_covariates()[j]).count() as f64 / 8.0;
        assert_eq!(u, fraction);
    }
    assert!(regularization_paths(&model, &[0.1, 0.01]).is_err());
    assert!(stability_paths(&model, &[]).is_err());
}

#[test]
fn partial_dependence_examples() {
    let (x, _) = data(12, 60, 3);
    let y: Vec<f64> = (0..60).map(|i| if x[(i, 0)] > 0.0 { 3.0 } else { 0.0 }).collect();
    let config =
        ForestConfig { max_splits: Some(1), mtry: Some(3), transform: TransformSpec::identity(), ..small_config(1) };
    let xs = x.clone();
    let model = fit_forest(&xs, &y, &config).unwrap();
    let tree = &model.trees[0];
    let NodeKind::Split { covariate, threshold, left, right, .. } = tree.nodes[0].kind else {
        panic!("expected a split")
    };
    assert_eq!(covariate, 0);
    let (NodeKind::Leaf { value: cl }, NodeKind::Leaf { value: cr }) =
        (&tree.nodes[left].kind, &tree.nodes[right].kind)
    else {
        panic!("expected leaves")
    };
    let grid = vec![threshold - 1.0, threshold, threshold + 1.0];
    let pd = partial_dependence(&model, 0, &grid, &xs, &[2, 5]).unwrap();
    for (got, want) in pd.mean.iter().zip([*cl, *cl, *cr]) {
        assert_relative_eq!(*got, want, max_relative = 1e-12, epsilon = 1e-12);
    }
    assert_eq!(pd.individual.len(), 2);

    let flat = partial_dependence(&model, 2, &[-1.0, 0.0, 3.0], &xs, &[]).unwrap();
    let mean_pred = crate::util::mean(&model.predict(&xs).unwrap());
    for v in flat.mean {
        assert_relative_eq!(v, mean_pred, max_relative = 1e-12);
    }

    let full = fit_forest(&x, &y, &small_config(4)).unwrap();
    let g = value_grid(&x, 1, 5).unwrap();
    let pd = partial_dependence(&full, 1, &g, &x, &[]).unwrap();
    for (k, &gv) in g.iter().enumerate() {
        let mut xm = x.clone();
        xm.column_mut(1).fill(gv);
        let brute: f64 = full.predict(&xm).unwrap().iter().sum::<f64>() / 60.0;
        assert!((pd.mean[k] - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
    }
}

#[test]
fn json_round_trip_preserves_predictions() {
    let (x, y) = data(13, 50, 3);
    let model = fit_forest(&x, &y, &small_config(3)).unwrap();
    let back = ForestModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.predict(&x).unwrap(), model.predict(&x).unwrap());
}

#[test]
fn constant_response_yields_single_leaves() {
    let (x, _) = data(14, 30, 3);
    let model = fit_forest(&x, &[1.0; 30], &small_config(3)).unwrap();
    assert!(model.trees.iter().all(|t| t.n_leaves() == 1));
    assert!(model.predict(&x).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn input_errors() {
    let (x, y) = data(15, 9, 3);
    assert!(matches!(fit_forest(&x, &y, &small_config(2)), Err(Error::Input(_))));
    let (x, y) = data(15, 30, 3);
    assert!(matches!(fit_forest(&x, &y[..29], &small_config(2)), Err(Error::Shape { .. })));
    assert!(matches!(fit_forest(&x, &y, &small_config(0)), Err(Error::Config(_))));
    assert!(matches!(fit_forest(&x, &y, &ForestConfig { mtry: Some(4), ..small_config(2) }), Err(Error::Config(_))));
    let mut zero_col = x.clone();
    zero_col.column_mut(1).fill(3.0);
    let scaled = ForestConfig { transform: TransformSpec::trim().with_scaling(true), ..small_config(2) };
    assert!(matches!(fit_forest(&zero_col, &y, &scaled), Err(Error::ZeroVariance { .. })));
}

#[test]
fn shared_transform_fits() {
    let (x, y) = data(16, 60, 4);
    let model = fit_forest(&x, &y, &ForestConfig { share_q: true, ..small_config(3) }).unwrap();
    assert_eq!(model.trees.len(), 3);
    assert!(model.predict(&x).unwrap().iter().all(|v| v.is_finite()));
}

//! Command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use sdforest::experiments::{
    bench_dims, bench_perturb, rate_check, screening_study, spectrum, variant_study, DimParam, DimsConfig,
    ExperimentResult, PerturbConfig, RateConfig, ScreeningConfig, VariantConfig,
};
use sdforest::forest::{partial_dependence, regularization_paths, stability_paths, value_grid, variable_importance};
use sdforest::io::{csv_string, dataset_csv, fmt_f64, read_table_file, write_with_sidecar, Sidecar, Table};
use sdforest::simgen::{gen_nonlinear, generate, NonlinearSpec, SimSpec};
use sdforest::util::{rng_from_seed, with_threads};
use sdforest::{fit_forest, Error, ForestConfig, ForestModel, Result, TransformKind};

use crate::config::{layered, read_config_file};
use crate::{
    BenchDimsArgs, BenchPerturbArgs, BenchScreeningArgs, Cli, Command, DimsPreset, FitArgs, ForestArgs, Generator,
    GlobalArgs, PathsArgs, PdpArgs, PredictArgs, RateCheckArgs, SimulateArgs, SpectrumArgs, VariantStudyArgs,
};

struct Context {
    global: GlobalArgs,
    file: Option<Value>,
}

impl Context {
    fn layered<T: Serialize + DeserializeOwned>(&self, preset: T) -> Result<T> {
        layered(preset, self.file.as_ref())
    }

    fn seed(&self, configured: u64) -> u64 {
        self.global.seed.unwrap_or(configured)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.global.out_dir.join(name)
    }

    fn write<C: Serialize>(&self, name: &str, contents: &str, command: &str, seed: u64, config: &C) -> Result<()> {
        let path = self.out(name);
        write_with_sidecar(&path, contents, &Sidecar::new(command, seed, config))?;
        info!("wrote {}", path.display());
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = cli.global.config.as_deref().map(read_config_file).transpose()?;
    let ctx = Context { global: cli.global.clone(), file };
    with_threads(ctx.global.threads, || match cli.command {
        Command::Fit(a) => fit(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Paths(a) => paths(&ctx, a),
        Command::Pdp(a) => pdp(&ctx, a),
        Command::BenchDims(a) => cmd_bench_dims(&ctx, a),
        Command::BenchPerturb(a) => cmd_bench_perturb(&ctx, a),
        Command::BenchScreening(a) => cmd_bench_screening(&ctx, a),
        Command::RateCheck(a) => cmd_rate_check(&ctx, a),
        Command::VariantStudy(a) => cmd_variant_study(&ctx, a),
        Command::Spectrum(a) => cmd_spectrum(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
    })?
}

fn parse_enum<T: DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| Error::Config(format!("invalid {what} '{s}'")))
}

impl ForestArgs {
    fn apply(&self, config: &mut ForestConfig) -> Result<()> {
        if let Some(v) = self.n_trees {
            config.n_trees = v;
        }
        if self.mtry.is_some() {
            config.mtry = self.mtry;
        }
        if let Some(v) = self.cp {
            config.cp = v;
        }
        if let Some(t) = &self.transform {
            config.transform.kind = t.parse::<TransformKind>()?;
        }
        if let Some(v) = self.pca_remove {
            config.transform.pca_remove = v;
        }
        if let Some(v) = self.scale_columns {
            config.transform.scale_columns = v;
        }
        if let Some(v) = self.min_leaf {
            config.min_leaf = v;
        }
        if let Some(v) = self.max_candidates {
            config.max_candidates = v;
        }
        if let Some(v) = &self.variant {
            config.variant = v.parse()?;
        }
        if self.max_splits.is_some() {
            config.max_splits = self.max_splits;
        }
        if self.sample_size.is_some() {
            config.sample_size = self.sample_size;
        }
        if let Some(v) = self.share_q {
            config.share_q = v;
        }
        Ok(())
    }
}

fn ignore_refs(ignore: &[String]) -> Vec<&str> {
    ignore.iter().map(String::as_str).collect()
}

fn load_model(path: &Path) -> Result<ForestModel> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read model {}: {e}", path.display())))?;
    ForestModel::from_json(&text)
}

fn load_predictors(path: &Path, ignore: &[String], model: &ForestModel) -> Result<Table> {
    let table = read_table_file(path, None, &ignore_refs(ignore))?;
    if table.x.ncols() != model.n_features {
        return Err(Error::Input(format!(
            "{} has {} predictor columns but the model expects {}; drop extra columns with --ignore",
            path.display(),
            table.x.ncols(),
            model.n_features
        )));
    }
    Ok(table)
}

fn fit(ctx: &Context, args: FitArgs) -> Result<()> {
    let mut config = ctx.layered(ForestConfig::default())?;
    args.forest.apply(&mut config)?;
    config.seed = ctx.seed(config.seed);
    let table = read_table_file(&args.data, Some(&args.response), &ignore_refs(&args.ignore))?;
    let y = table.y.clone().unwrap_or_default();
    let model = fit_forest(&table.x, &y, &config)?;

    fs::create_dir_all(&ctx.global.out_dir)?;
    fs::write(ctx.out("model.json"), model.to_json()?)?;

    let importance = variable_importance(&model);
    let rows: Vec<Vec<String>> = importance
        .iter()
        .enumerate()
        .map(|(j, v)| vec![j.to_string(), table.predictor_names[j].clone(), fmt_f64(*v)])
        .collect();
    ctx.write(
        "importance.csv",
        &csv_string(&["covariate", "name", "importance"], &rows)?,
        "fit",
        config.seed,
        &config,
    )?;

    let (oob, covered) = model.oob_predict(&table.x)?;
    let errors: Vec<f64> = (0..y.len()).filter(|&i| covered[i]).map(|i| (oob[i] - y[i]).powi(2)).collect();
    let oob_mse = if errors.is_empty() { None } else { Some(sdforest::util::mean(&errors)) };
    let report = json!({
        "n": table.x.nrows(),
        "p": table.x.ncols(),
        "response": args.response,
        "predictors": table.predictor_names,
        "transform": config.transform.kind.to_string(),
        "classical_baseline": config.transform.kind == TransformKind::Identity,
        "n_trees": config.n_trees,
        "mtry": config.resolved_mtry(table.x.ncols()),
        "oob_mse": oob_mse,
        "oob_covered": errors.len(),
        "seed": config.seed,
        "version": sdforest::io::VERSION,
        "git_describe": sdforest::io::GIT_DESCRIBE,
    });
    fs::write(ctx.out("fit_report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    if config.transform.kind == TransformKind::Identity {
        println!("identity transform: classical random forest baseline");
    }
    match oob_mse {
        Some(m) => println!(
            "fitted {} trees on n = {}, p = {}; out-of-bag MSE {m:.6}",
            config.n_trees,
            y.len(),
            table.x.ncols()
        ),
        None => println!("fitted {} trees on n = {}, p = {}", config.n_trees, y.len(), table.x.ncols()),
    }
    Ok(())
}

fn predict(ctx: &Context, args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let table = load_predictors(&args.data, &args.ignore, &model)?;
    let pred = model.predict(&table.x)?;
    let rows: Vec<Vec<String>> = pred.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt_f64(*v)]).collect();
    let echo = json!({ "model": args.model, "data": args.data, "ignore": args.ignore });
    ctx.write(&args.output, &csv_string(&["row", "prediction"], &rows)?, "predict", model.config.seed, &echo)
}

fn default_cp_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Config("--grid-points must be at least 2".into()));
    }
    Ok((0..points).map(|k| 1e-4 * 10f64.powf(4.0 * k as f64 / (points - 1) as f64)).collect())
}

fn path_csv(grid: &[f64], values: &[Vec<f64>]) -> Result<String> {
    let rows: Vec<Vec<String>> = grid
        .iter()
        .zip(values)
        .flat_map(|(cp, row)| row.iter().enumerate().map(move |(j, v)| vec![fmt_f64(*cp), j.to_string(), fmt_f64(*v)]))
        .collect();
    csv_string(&["cp", "covariate", "value"], &rows)
}

fn paths(ctx: &Context, args: PathsArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let grid = if args.cp_grid.is_empty() { default_cp_grid(args.grid_points)? } else { args.cp_grid };
    let importance = regularization_paths(&model, &grid)?;
    let stability = stability_paths(&model, &grid)?;
    let echo = json!({ "model": args.model, "cp_grid": grid });
    let seed = model.config.seed;
    ctx.write("importance_path.csv", &path_csv(&grid, &importance)?, "paths", seed, &echo)?;
    ctx.write("stability_path.csv", &path_csv(&grid, &stability)?, "paths", seed, &echo)
}

fn pdp(ctx: &Context, args: PdpArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let table = load_predictors(&args.data, &args.ignore, &model)?;
    let n = table.x.nrows();
    if args.individual > n {
        return Err(Error::Range(format!("--individual {} exceeds the {n} observations", args.individual)));
    }
    let seed = ctx.seed(model.config.seed);
    let mut rows_chosen = sample(&mut rng_from_seed(seed), n, args.individual).into_vec();
    rows_chosen.sort_unstable();

    let mut rows = Vec::new();
    for &j in &args.covariates {
        let grid = value_grid(&table.x, j, args.grid_points)?;
        let pd = partial_dependence(&model, j, &grid, &table.x, &rows_chosen)?;
        for (k, g) in grid.iter().enumerate() {
            rows.push(vec![j.to_string(), "mean".into(), fmt_f64(*g), fmt_f64(pd.mean[k])]);
        }
        for (row, curve) in &pd.individual {
            for (k, g) in grid.iter().enumerate() {
                rows.push(vec![j.to_string(), row.to_string(), fmt_f64(*g), fmt_f64(curve[k])]);
            }
        }
    }
    let echo = json!({
        "model": args.model,
        "data": args.data,
        "covariates": args.covariates,
        "grid_points": args.grid_points,
        "individual_rows": rows_chosen,
    });
    ctx.write("pdp.csv", &csv_string(&["covariate", "curve", "grid_value", "prediction"], &rows)?, "pdp", seed, &echo)
}

fn write_experiment<C: Serialize>(ctx: &Context, result: &ExperimentResult, seed: u64, config: &C) -> Result<()> {
    let name = &result.experiment;
    let command = name.replace('_', "-");
    ctx.write(&format!("{name}.csv"), &result.results_csv()?, &command, seed, config)?;
    ctx.write(&format!("{name}_aggregates.csv"), &result.aggregates_csv()?, &command, seed, config)?;
    ctx.write(&format!("{name}_timings.csv"), &result.timings_csv()?, &command, seed, config)?;
    for a in result.aggregates() {
        println!("{} {}={} {}: median {:.6} over {}", a.method, a.parameter, a.level, a.metric, a.median, a.count);
    }
    Ok(())
}

fn cmd_bench_dims(ctx: &Context, args: BenchDimsArgs) -> Result<()> {
    let vary: DimParam = args.vary.parse()?;
    let preset = match args.preset {
        DimsPreset::Desk => DimsConfig::desk(vary),
        DimsPreset::Full => DimsConfig::full(vary),
    };
    let mut config = ctx.layered(preset)?;
    config.vary = vary;
    if !args.values.is_empty() {
        config.values = args.values;
    }
    if let Some(r) = args.reps {
        config.reps = r;
    }
    if let Some(t) = args.n_test {
        config.n_test = t;
    }
    args.forest.apply(&mut config.forest)?;
    config.seed = ctx.seed(config.seed);
    let result = bench_dims(&config)?;
    write_experiment(ctx, &result, config.seed, &config)
}

fn cmd_bench_perturb(ctx: &Context, args: BenchPerturbArgs) -> Result<()> {
    let mut config = ctx.layered(PerturbConfig::desk())?;
    if !args.tau_grid.is_empty() {
        config.tau_grid = args.tau_grid;
    }
    if let Some(r) = args.reps {
        config.reps = r;
    }
    args.forest.apply(&mut config.forest)?;
    config.seed = ctx.seed(config.seed);
    let result = match &args.data {
        Some(path) => {
            let response = args
                .response
                .as_deref()
                .ok_or_else(|| Error::Input("--response is required together with --data".into()))?;
            let table = read_table_file(path, Some(response), &ignore_refs(&args.ignore))?;
            let y = table.y.unwrap_or_default();
            bench_perturb(&config, Some((&table.x, &y)))?
        }
        None => bench_perturb(&config, None)?,
    };
    let echo = json!({ "config": config, "data": args.data });
    write_experiment(ctx, &result, config.seed, &echo)
}

fn cmd_bench_screening(ctx: &Context, args: BenchScreeningArgs) -> Result<()> {
    let mut config = ctx.layered(ScreeningConfig::default())?;
    if let Some(r) = args.reps {
        config.reps = r;
    }
    args.forest.apply(&mut config.forest)?;
    config.seed = ctx.seed(config.seed);
    let result = screening_study(&config)?;
    write_experiment(ctx, &result, config.seed, &config)
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("grid entry '{s}' is not of the form NxP"));
    let (n, p) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((n.trim().parse().map_err(|_| bad())?, p.trim().parse().map_err(|_| bad())?))
}

fn cmd_rate_check(ctx: &Context, args: RateCheckArgs) -> Result<()> {
    let mut config = ctx.layered(RateConfig::default())?;
    if !args.grid.is_empty() {
        config.grid = args.grid.iter().map(|s| parse_pair(s)).collect::<Result<_>>()?;
    }
    if let Some(r) = args.reps {
        config.reps = r;
    }
    if let Some(q) = args.q {
        config.q = q;
    }
    config.seed = ctx.seed(config.seed);
    let result = rate_check(&config)?;
    ctx.write("rate_check.csv", &result.results_csv()?, "rate-check", config.seed, &config)?;
    ctx.write("rate_check_aggregates.csv", &result.aggregates_csv()?, "rate-check", config.seed, &config)?;
    for (n, p, gap, scaled) in result.medians() {
        println!("n = {n}, p = {p}: median gap {gap:.6}, scaled {scaled:.6}");
    }
    Ok(())
}

fn cmd_variant_study(ctx: &Context, args: VariantStudyArgs) -> Result<()> {
    let mut config = ctx.layered(VariantConfig::default())?;
    if let Some(r) = args.reps {
        config.reps = r;
    }
    if let Some(cp) = args.cp {
        config.cp = cp;
    }
    if let Some(t) = args.n_test {
        config.n_test = t;
    }
    config.seed = ctx.seed(config.seed);
    let result = variant_study(&config)?;
    write_experiment(ctx, &result, config.seed, &config)
}

fn cmd_spectrum(ctx: &Context, args: SpectrumArgs) -> Result<()> {
    let seed = ctx.seed(0);
    let (x, q_default, echo): (DMatrix<f64>, usize, Value) = match &args.data {
        Some(path) => {
            let table = read_table_file(path, None, &ignore_refs(&args.ignore))?;
            (table.x, 1, json!({ "data": path }))
        }
        None => match args.generator {
            Generator::Linear => {
                let mut spec = ctx.layered(SimSpec::desk())?;
                spec.n = args.n.unwrap_or(spec.n);
                spec.p = args.p.unwrap_or(spec.p);
                spec.q = args.q.unwrap_or(spec.q);
                spec.seed = ctx.seed(spec.seed);
                let (_, data) = generate(&spec)?;
                (data.x, spec.q, json!({ "generator": "linear", "spec": spec }))
            }
            Generator::Nonlinear => {
                let mut spec = ctx.layered(NonlinearSpec::default())?;
                spec.n = args.n.unwrap_or(spec.n);
                spec.p = args.p.unwrap_or(spec.p);
                spec.seed = ctx.seed(spec.seed);
                let data = gen_nonlinear(&spec, &mut rng_from_seed(spec.seed))?;
                (data.data.x, 1, json!({ "generator": "nonlinear", "spec": spec }))
            }
        },
    };
    let q_remove = args.q_remove.unwrap_or(q_default);
    let s = spectrum(&x, args.scale_columns, q_remove)?;
    let echo = json!({ "source": echo, "scale_columns": args.scale_columns, "q_remove": q_remove });
    ctx.write("spectrum.csv", &s.csv()?, "spectrum", seed, &echo)
}

fn simulate(ctx: &Context, args: SimulateArgs) -> Result<()> {
    let mut spec = ctx.layered(SimSpec::desk())?;
    spec.n = args.n.unwrap_or(spec.n);
    spec.p = args.p.unwrap_or(spec.p);
    spec.q = args.q.unwrap_or(spec.q);
    spec.density = args.density.unwrap_or(spec.density);
    spec.sigma_nu = args.sigma_nu.unwrap_or(spec.sigma_nu);
    if let Some(f0) = &args.f0 {
        spec.f0 = parse_enum("f0 kind", f0)?;
    }
    spec.seed = ctx.seed(spec.seed);
    let (process, data) = generate(&spec)?;
    let echo = json!({ "spec": spec, "parents": data.parents, "confounded": process.confounded });
    ctx.write(&args.output, &dataset_csv(&data)?, "simulate", spec.seed, &echo)?;
    println!("wrote n = {}, p = {} with parents {:?}", spec.n, spec.p, data.parents);
    Ok(())
}

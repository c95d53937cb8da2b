//! Subcommand implementations.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use orf_core::data::load_dataset;
use orf_core::dml::{first_stage_f, fit_dml, fit_dmliv, CrossFitPlan, IvOptions};
use orf_core::forest::{bootstrap_ci, fit_orf, BootstrapConfig};
use orf_core::policy::{grid_search_price, optimal_price, revenue, revenue_curve, PolicyInputs};
use orf_core::rng::derive_seed;
use orf_core::synthetic::{generate, scenarios, score, DgpSpec, Truth};
use orf_core::{AteEstimate, Dataset, EffectEstimate, OrfModel};
use serde_json::{json, Value};

use crate::config::{self, Estimator, RunConfig};
use crate::output::{self, json_number, number, optional};
use crate::svg;
use crate::Command;

struct Outcome {
    files: Vec<String>,
    summary: String,
}

/// Runs one subcommand and returns its one-line summary.
pub fn run(command: &Command) -> Result<String> {
    let started = Instant::now();
    let args = command.args();
    let mut cfg = config::load(&args.config, &args.overrides)?;
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    cfg.extrapolate |= args.extrapolate;
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    let given_slopes = cfg.policy.as_ref().is_some_and(|p| p.slopes.is_some());
    let needs_data = match command {
        Command::Benchmark(_) => false,
        Command::Policy(_) => !given_slopes,
        _ => true,
    };
    if needs_data {
        cfg.check_data_source()?;
    }
    if let Some(model) = &args.model {
        if !model.is_file() {
            bail!("model file {} does not exist", model.display());
        }
    }
    let threads = resolve_threads(cfg.threads)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating output directory {}", cfg.output.display()))?;
    let model = args.model.as_deref();
    let outcome = pool.install(|| match command {
        Command::Fit(_) => fit(&cfg),
        Command::Effects(_) => effects(&cfg, model),
        Command::Bootstrap(_) => bootstrap(&cfg),
        Command::Dml(_) => ate(&cfg, Estimator::Dml),
        Command::Dmliv(_) => ate(&cfg, Estimator::Dmliv),
        Command::Policy(_) => policy(&cfg, model),
        Command::Benchmark(_) => benchmark(&cfg),
        Command::PlotData(_) => plot_data(&cfg, model),
    })?;
    let manifest = output::write_manifest(&cfg, command.name(), threads, started.elapsed(), &outcome.files)?;
    Ok(format!("{} (wrote {} and {manifest} to {})", outcome.summary, outcome.files.join(", "), cfg.output.display()))
}

fn resolve_threads(configured: Option<usize>) -> Result<usize> {
    let threads = match configured {
        Some(t) => t,
        None => match std::env::var("ORF_THREADS") {
            Ok(v) => v.trim().parse().map_err(|_| anyhow!("ORF_THREADS = `{v}` is not a thread count"))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if threads == 0 {
        bail!("threads must be at least 1");
    }
    Ok(threads)
}

fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<Truth>)> {
    cfg.check_data_source()?;
    let d = &cfg.data;
    if let Some(path) = &d.csv {
        let schema = cfg.schema()?;
        let data = load_dataset(path, &schema).with_context(|| format!("loading data.csv {}", path.display()))?;
        return Ok((data, None));
    }
    let seed = derive_seed(cfg.seed, "data", 0);
    let spec = match (&d.scenario, &d.dgp) {
        (Some(name), _) => {
            let n = d.n.expect("checked with the data source");
            let mut spec = scenarios::by_name(name, n, seed).context("data.scenario")?;
            if let Some(features) = d.features {
                spec.features = features;
            }
            spec
        }
        (None, Some(dgp)) => DgpSpec { seed, ..dgp.clone() },
        (None, None) => unreachable!("checked with the data source"),
    };
    let (data, truth) = generate::<f64>(&spec).context("data")?;
    Ok((data, Some(truth)))
}

fn test_points(cfg: &RunConfig, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let points = cfg.test_points()?.ok_or_else(|| anyhow!("this command needs a [points] section"))?;
    let ranges = data.feature_ranges();
    let d = ranges.len();
    for (k, x) in points.iter().enumerate() {
        if x.len() != d {
            bail!("points[{k}] has {} coordinates but the data have {d} features", x.len());
        }
        if cfg.extrapolate {
            continue;
        }
        for (j, (&v, &(lo, hi))) in x.iter().zip(&ranges).enumerate() {
            if !(lo..=hi).contains(&v) {
                bail!(
                    "points[{k}] feature {j} = {v} lies outside the observed range [{lo}, {hi}]; \
                     use --extrapolate to allow it"
                );
            }
        }
    }
    Ok(points)
}

fn model_for(cfg: &RunConfig, data: &Dataset, path: Option<&Path>) -> Result<OrfModel> {
    match path {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening model {}", p.display()))?;
            let model: OrfModel = serde_json::from_reader(BufReader::new(file))
                .with_context(|| format!("reading model {}", p.display()))?;
            if model.n != data.n() || model.fingerprint != data.fingerprint() {
                bail!("model {} was fitted on different data", p.display());
            }
            Ok(model)
        }
        None => Ok(fit_orf(data, &cfg.forest_config())?),
    }
}

fn cross_fit_plan(cfg: &RunConfig, n: usize) -> Result<CrossFitPlan> {
    CrossFitPlan::new(n, cfg.dml.folds, derive_seed(cfg.seed, "cross-fit", 0)).context("dml.folds")
}

fn iv_options(cfg: &RunConfig) -> IvOptions {
    IvOptions { instrument: cfg.dml.instrument, combine: cfg.dml.combine }
}

fn instrument_columns(cfg: &RunConfig, data: &Dataset) -> Vec<usize> {
    match (cfg.dml.instrument, cfg.dml.combine) {
        (Some(j), false) => vec![j],
        _ => (0..data.dims().q).collect(),
    }
}

fn fit_ate(cfg: &RunConfig, data: &Dataset, estimator: Estimator) -> Result<AteEstimate> {
    let plan = cross_fit_plan(cfg, data.n())?;
    let learner = &cfg.nuisance.cross_fit;
    Ok(match estimator {
        Estimator::Dml => fit_dml(data, learner, &plan, cfg.dml.level)?,
        Estimator::Dmliv => fit_dmliv(data, learner, &plan, &iv_options(cfg), cfg.dml.level)?,
        Estimator::Orf => unreachable!("forest estimates are not constant"),
    })
}

fn constant_effects(ate: &AteEstimate, points: &[Vec<f64>], n: usize) -> Vec<EffectEstimate> {
    points
        .iter()
        .map(|x| EffectEstimate {
            x: x.clone(),
            theta: ate.theta,
            ci_low: Some(ate.ci_low),
            ci_high: Some(ate.ci_high),
            n_effective: n as f64,
        })
        .collect()
}

fn point_effects(cfg: &RunConfig, data: &Dataset, points: &[Vec<f64>], model: Option<&Path>) -> Result<Vec<EffectEstimate>> {
    match cfg.estimator {
        Estimator::Orf => {
            let model = model_for(cfg, data, model)?;
            Ok(model.estimate_effects(data, &cfg.nuisance.final_learner, points)?)
        }
        other => Ok(constant_effects(&fit_ate(cfg, data, other)?, points, data.n())),
    }
}

fn bootstrap_config(cfg: &RunConfig) -> BootstrapConfig {
    let b = &cfg.bootstrap;
    BootstrapConfig {
        replicates: b.replicates,
        level: b.level,
        cluster: b.cluster,
        seed: derive_seed(cfg.seed, "bootstrap", 0),
    }
}

fn interval_effects(cfg: &RunConfig, data: &Dataset, points: &[Vec<f64>]) -> Result<Vec<EffectEstimate>> {
    let forest = cfg.forest_config();
    let node = forest.node_learner.clone();
    Ok(bootstrap_ci(data, &forest, &node, &cfg.nuisance.final_learner, points, &bootstrap_config(cfg))?)
}

fn fit(cfg: &RunConfig) -> Result<Outcome> {
    let (data, _) = load_data(cfg)?;
    let model = fit_orf(&data, &cfg.forest_config())?;
    output::write_json(&cfg.output.join("model.json"), &model)?;
    Ok(Outcome {
        files: vec!["model.json".into()],
        summary: format!("fitted {} + {} trees on {} rows", model.nuisance_forest.trees.len(), model.target_forest.trees.len(), data.n()),
    })
}

fn effects(cfg: &RunConfig, model: Option<&Path>) -> Result<Outcome> {
    let (data, _) = load_data(cfg)?;
    let points = test_points(cfg, &data)?;
    let estimates = point_effects(cfg, &data, &points, model)?;
    let files = output::write_effects(&cfg.output, "effects", &estimates)?;
    Ok(Outcome { files, summary: format!("{} effects at {} points", cfg.estimator.name(), estimates.len()) })
}

fn bootstrap(cfg: &RunConfig) -> Result<Outcome> {
    let (data, _) = load_data(cfg)?;
    let points = test_points(cfg, &data)?;
    let estimates = interval_effects(cfg, &data, &points)?;
    let files = output::write_effects(&cfg.output, "bootstrap", &estimates)?;
    Ok(Outcome {
        files,
        summary: format!(
            "orf effects with {:.0}% bootstrap intervals from {} replicates at {} points",
            100.0 * cfg.bootstrap.level,
            cfg.bootstrap.replicates,
            estimates.len()
        ),
    })
}

fn ate(cfg: &RunConfig, estimator: Estimator) -> Result<Outcome> {
    let (data, _) = load_data(cfg)?;
    let est = fit_ate(cfg, &data, estimator)?;
    let mut record = json!({
        "estimator": estimator.name(),
        "n": data.n(),
        "theta": json_number(est.theta),
        "std_error": json_number(est.std_error),
        "ci_low": json_number(est.ci_low),
        "ci_high": json_number(est.ci_high),
        "level": est.level,
    });
    let mut summary = format!(
        "{}: theta = {:.4} (se {:.4}), {:.0}% CI [{:.4}, {:.4}]",
        estimator.name(),
        est.theta,
        est.std_error,
        100.0 * est.level,
        est.ci_low,
        est.ci_high
    );
    if estimator == Estimator::Dmliv {
        let f = first_stage_f(&data, &instrument_columns(cfg, &data))?;
        record["first_stage_f"] = json_number(f);
        summary.push_str(&format!(", first-stage F = {f:.2}"));
    }
    record["folds"] = serde_json::to_value(&est.folds)?;
    let name = format!("{}.json", estimator.name());
    output::write_json(&cfg.output.join(&name), &record)?;
    Ok(Outcome { files: vec![name], summary })
}

fn policy(cfg: &RunConfig, model: Option<&Path>) -> Result<Outcome> {
    let section = cfg.policy.as_ref().ok_or_else(|| anyhow!("the policy command needs a [policy] section"))?;
    let slopes = match &section.slopes {
        Some(s) => s.clone(),
        None => {
            let (data, _) = load_data(cfg)?;
            let points = test_points(cfg, &data)?;
            point_effects(cfg, &data, &points, model)?.iter().map(|e| e.theta).collect()
        }
    };
    let inputs = PolicyInputs {
        slopes,
        outcome_level: section.outcome_level.to_vec(),
        treatment_level: section.treatment_level.to_vec(),
        lower: section.lower,
        upper: section.upper,
    };
    let price = optimal_price(&inputs).context("policy")?;
    let grid = grid_search_price(&inputs, section.grid_step).context("policy.grid_step")?;
    let curve = revenue_curve(&inputs, section.curve_points).context("policy.curve_points")?;
    let best = revenue(price, &inputs);
    let record = json!({
        "days": inputs.slopes.len(),
        "slopes": inputs.slopes.iter().map(|&v| json_number(v)).collect::<Vec<Value>>(),
        "lower": inputs.lower,
        "upper": inputs.upper,
        "optimal_price": json_number(price),
        "revenue": json_number(best),
        "grid_price": json_number(grid),
        "grid_step": section.grid_step,
    });
    output::write_json(&cfg.output.join("policy.json"), &record)?;
    let rows: Vec<Vec<String>> = curve.iter().map(|&(p, r)| vec![number(p), number(r)]).collect();
    output::write_rows(&cfg.output.join("policy_curve.csv"), &["price".into(), "revenue".into()], &rows)?;
    Ok(Outcome {
        files: vec!["policy.json".into(), "policy_curve.csv".into()],
        summary: format!("optimal price {price:.4} with revenue {best:.4} over {} days", inputs.slopes.len()),
    })
}

fn plot_data(cfg: &RunConfig, model: Option<&Path>) -> Result<Outcome> {
    let (data, _) = load_data(cfg)?;
    let points = test_points(cfg, &data)?;
    let estimates = if cfg.estimator == Estimator::Orf && cfg.bootstrap.replicates > 0 {
        interval_effects(cfg, &data, &points)?
    } else {
        point_effects(cfg, &data, &points, model)?
    };
    let feature = cfg.points.as_ref().and_then(|p| p.range.as_ref()).map_or(0, |r| r.feature);
    let x: Vec<f64> = estimates.iter().map(|e| e.x[feature]).collect();
    let theta: Vec<f64> = estimates.iter().map(|e| e.theta).collect();
    let low: Option<Vec<f64>> = estimates.iter().map(|e| e.ci_low).collect();
    let high: Option<Vec<f64>> = estimates.iter().map(|e| e.ci_high).collect();
    let rows: Vec<Vec<String>> =
        estimates.iter().map(|e| vec![number(e.x[feature]), number(e.theta), optional(e.ci_low), optional(e.ci_high)]).collect();
    let header = ["x", "theta", "ci_low", "ci_high"].map(String::from);
    output::write_rows(&cfg.output.join("plot.csv"), &header, &rows)?;
    let x_label = if data.dims().d == 1 { "x".to_string() } else { format!("x{feature}") };
    let band = low.as_deref().zip(high.as_deref());
    let picture = svg::render(&svg::Series { x: &x, theta: &theta, band, x_label: &x_label });
    fs::write(cfg.output.join("plot.svg"), picture)?;
    Ok(Outcome {
        files: vec!["plot.csv".into(), "plot.svg".into()],
        summary: format!("{} effect curve over {} points", cfg.estimator.name(), estimates.len()),
    })
}

fn evaluation_points(data: &Dataset, count: usize) -> Vec<Vec<f64>> {
    let ranges = data.feature_ranges();
    let centre: Vec<f64> = ranges.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    let (lo, hi) = ranges[0];
    (0..count)
        .map(|k| {
            let mut x = centre.clone();
            x[0] = lo + (hi - lo) * (k as f64 + 0.5) / count as f64;
            x
        })
        .collect()
}

fn benchmark(cfg: &RunConfig) -> Result<Outcome> {
    let b = &cfg.benchmark;
    if b.replicates == 0 || b.points == 0 {
        bail!("benchmark.replicates and benchmark.points must be positive");
    }
    let mut rows = Vec::new();
    for name in &b.scenarios {
        let mut pooled: Vec<(Estimator, Vec<EffectEstimate>, f64)> = b.estimators.iter().map(|&e| (e, Vec::new(), 0.0)).collect();
        let mut truth = None;
        for r in 0..b.replicates {
            let seed = derive_seed(cfg.seed, &format!("benchmark-{name}"), r as u64);
            let spec = scenarios::by_name(name, b.n, seed).context("benchmark.scenarios")?;
            let (data, t) = generate::<f64>(&spec)?;
            let points = evaluation_points(&data, b.points);
            let replicate = RunConfig { seed: derive_seed(seed, "estimators", 0), ..cfg.clone() };
            for (estimator, estimates, secs) in pooled.iter_mut() {
                if *estimator == Estimator::Dmliv && data.dims().q == 0 {
                    continue;
                }
                let started = Instant::now();
                let mut found = match estimator {
                    Estimator::Orf if b.intervals => interval_effects(&replicate, &data, &points)?,
                    Estimator::Orf => {
                        let model = fit_orf(&data, &replicate.forest_config())?;
                        model.estimate_effects(&data, &replicate.nuisance.final_learner, &points)?
                    }
                    other => constant_effects(&fit_ate(&replicate, &data, *other)?, &points, data.n()),
                };
                *secs += started.elapsed().as_secs_f64();
                estimates.append(&mut found);
            }
            truth = Some(t);
        }
        let truth = truth.expect("at least one replicate");
        for (estimator, estimates, secs) in &pooled {
            if estimates.is_empty() {
                continue;
            }
            let m = score(estimates, |x| truth.theta(x))?;
            rows.push(vec![name.clone(), estimator.name().to_string(), number(m.rmse), number(m.bias), optional(m.coverage), format!("{secs:.3}")]);
        }
    }
    let header = ["scenario", "estimator", "rmse", "bias", "coverage", "wall_time"].map(String::from);
    output::write_rows(&cfg.output.join("benchmark.csv"), &header, &rows)?;
    Ok(Outcome {
        files: vec!["benchmark.csv".into()],
        summary: format!("benchmark of {} scenarios with {} replicates each", b.scenarios.len(), b.replicates),
    })
}

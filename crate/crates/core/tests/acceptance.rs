//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run a subset by passing criterion numbers:
//! `cargo test -p orf-core --test acceptance -- 4 9`.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use ndarray::Array2;
use orf_core::dml::{dmliv_from_residuals, fit_dml, fit_dmliv, CrossFitPlan, IvOptions};
use orf_core::forest::moments::{fit_node_theta, heterogeneity_score, kernel_theta, newton_proxy};
use orf_core::forest::{bootstrap_ci, fit_orf, forest_weights, grow_forest, BootstrapConfig, ForestConfig};
use orf_core::nuisance::{
    r_squared, Activation, Architecture, LearnerSpec, NetworkSpec, NuisanceLearner, SdnnModel, Target, TrainConfig,
};
use orf_core::policy::{grid_search_price, optimal_price, PolicyInputs};
use orf_core::rng;
use orf_core::synthetic::{generate, scenarios};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use common::grid_argmin;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: {a} vs {b}"))
    }
}

fn closed_form_suite() -> Check {
    let fit = fit_node_theta(&[1.0, 5.0], &[1.0, 2.0]).map_err(|e| e.to_string())?;
    close(fit.theta, 2.2, 1e-12, "node theta")?;
    let grid = grid_argmin(|th| 0.5 * ((th - 1.0).powi(2) + (2.0 * th - 5.0).powi(2)), -10.0, 10.0, 1e-7);
    close(fit.theta, grid, 1e-6, "node theta vs grid")?;
    let fit = fit_node_theta(&[2.0, -2.0], &[1.0, -1.0]).map_err(|e| e.to_string())?;
    close(fit.theta, 2.0, 1e-12, "hand ratio")?;
    close(fit.hessian, -1.0, 1e-12, "hessian")?;

    let parent = fit_node_theta(&[3.0, 1.0], &[1.0, 1.0]).map_err(|e| e.to_string())?;
    let child = newton_proxy(parent.theta, parent.hessian, &[3.0], &[1.0]).map_err(|e| e.to_string())?;
    close(child, 3.0, 1e-12, "newton proxy")?;
    close(heterogeneity_score(1.0, -1.0, 0.0, 1, 1), 2.0, 1e-12, "heterogeneity score")?;

    let mut r = rng::stream(1, "criterion-1", 0);
    for _ in 0..20 {
        let n = r.random_range(3..12);
        let a: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let t: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let theta = kernel_theta(&a, &y, &t).map_err(|e| e.to_string())?;
        let loss = |th: f64| (0..n).map(|i| a[i] * (th * t[i] - y[i]).powi(2)).sum::<f64>();
        close(theta, grid_argmin(loss, -50.0, 50.0, 1e-7), 1e-6, "kernel regression vs grid")?;
    }

    let iv = dmliv_from_residuals(&[1.0, 2.0], &[1.0, 1.0], &[2.0, 1.0], 0.95).map_err(|e| e.to_string())?;
    close(iv.theta, 4.0 / 3.0, 1e-12, "DMLIV ratio")?;

    let one = PolicyInputs::constant_levels(vec![-1.0], 10.0, 0.0, 0.0, 10.0);
    close(optimal_price(&one).map_err(|e| e.to_string())?, 5.0, 1e-12, "one-day price")?;
    let two = PolicyInputs {
        slopes: vec![-1.0, -1.0],
        outcome_level: vec![10.0, 6.0],
        treatment_level: vec![0.0],
        lower: 0.0,
        upper: 10.0,
    };
    let star = optimal_price(&two).map_err(|e| e.to_string())?;
    let grid = grid_search_price(&two, 1e-4).map_err(|e| e.to_string())?;
    close(star, 4.0, 1e-12, "two-day price")?;
    close(star, grid, 1e-4, "price vs grid")?;
    Ok("all closed forms match their oracles".into())
}

fn newton_fixed_point() -> Check {
    let mut r = rng::stream(2, "criterion-2", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.random_range(2..200);
        let scale = 10f64.powf(r.random_range(-2.0..2.0));
        let t: Vec<f64> = (0..n).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = t.iter().map(|t| r.random_range(-3.0..3.0) * t + r.sample::<f64, _>(StandardNormal)).collect();
        let fit = fit_node_theta(&y, &t).map_err(|e| e.to_string())?;
        let proxy = newton_proxy(fit.theta, fit.hessian, &y, &t).map_err(|e| e.to_string())?;
        worst = worst.max((proxy - fit.theta).abs() / fit.theta.abs().max(1.0));
    }
    ensure(worst <= 1e-12, format!("max relative deviation {worst:.2e} over 1000 nodes"))
}

fn honesty_and_weights() -> Check {
    let cfg = ForestConfig { trees: 50, min_leaf: 10, ..Default::default() };
    let learner = LearnerSpec::lasso(1.0);
    let results: Vec<Result<f64, String>> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let (data, _) = generate::<f64>(&scenarios::step(1000, 2, 300 + s)).map_err(|e| e.to_string())?;
            let pool: Vec<usize> = (0..data.n()).collect();
            let forest = grow_forest(&data, &pool, &cfg, &learner, s, "criterion-3").map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for tree in &forest.trees {
                let split: BTreeSet<usize> = tree.split_sample.iter().copied().collect();
                let mut members = BTreeSet::new();
                for leaf in &tree.leaves {
                    for &i in leaf {
                        if split.contains(&i) || !members.insert(i) {
                            return Err(format!("forest {s}: row {i} breaks honesty"));
                        }
                    }
                }
                if members.iter().ne(tree.estimation_sample.iter()) {
                    return Err(format!("forest {s}: leaves do not partition the estimation sample"));
                }
            }
            let mut r = rng::stream(s, "criterion-3-points", 0);
            for _ in 0..10 {
                let x = [r.random_range(-1.0..1.0)];
                for tree in &forest.trees {
                    let leaf = tree.matched(&x);
                    let total: f64 = leaf.iter().map(|_| 1.0 / leaf.len() as f64).sum();
                    worst = worst.max((total - 1.0).abs());
                }
                let w = forest_weights(&forest, &x, &pool);
                if w.iter().any(|v| *v < 0.0) {
                    return Err(format!("forest {s}: negative weight"));
                }
                worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
            }
            Ok(worst)
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in results {
        worst = worst.max(r?);
    }
    ensure(worst <= 1e-12, format!("50 forests honest; max weight-sum deviation {worst:.1e}"))
}

const C4_POINTS: [f64; 5] = [-0.8, -0.4, 0.0, 0.4, 0.8];

fn homogeneous_recovery() -> Check {
    let (data, truth) = generate::<f64>(&scenarios::homogeneous(4000, 50, 3, 4)).map_err(|e| e.to_string())?;
    let cfg = ForestConfig { trees: 200, min_leaf: 40, node_learner: LearnerSpec::lasso(10.0), seed: 4, ..Default::default() };
    let model = fit_orf(&data, &cfg).map_err(|e| e.to_string())?;
    let points: Vec<Vec<f64>> = C4_POINTS.iter().map(|&x| vec![x]).collect();
    let est = model.estimate_effects(&data, &LearnerSpec::lasso(0.01), &points).map_err(|e| e.to_string())?;
    let errs: Vec<f64> = est.iter().map(|e| (e.theta - truth.theta(&e.x)).abs()).collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    let shown: Vec<String> = est.iter().map(|e| format!("{:.3}", e.theta)).collect();
    ensure(worst <= 0.15, format!("estimates [{}], max |error| {worst:.3}", shown.join(", ")))
}

fn heterogeneous_recovery() -> Check {
    let grid: Vec<Vec<f64>> = (0..11).map(|k| vec![-1.0 + 0.2 * k as f64]).collect();
    let cfg = ForestConfig { trees: 100, min_leaf: 10, node_learner: LearnerSpec::lasso(1.0), ..Default::default() };
    let runs: Vec<Result<(f64, bool), String>> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let (data, truth) = generate::<f64>(&scenarios::step(2000, 2, 500 + s)).map_err(|e| e.to_string())?;
            let model = fit_orf(&data, &ForestConfig { seed: s, ..cfg.clone() }).map_err(|e| e.to_string())?;
            let est = model.estimate_effects(&data, &LearnerSpec::lasso(0.01), &grid).map_err(|e| e.to_string())?;
            let mse = est.iter().map(|e| (e.theta - truth.theta(&e.x)).powi(2)).sum::<f64>() / est.len() as f64;
            let left = est.iter().filter(|e| e.x[0] < 0.0).map(|e| e.theta).fold(f64::NEG_INFINITY, f64::max);
            let right = est.iter().filter(|e| e.x[0] > 0.0).map(|e| e.theta).fold(f64::INFINITY, f64::min);
            Ok((mse.sqrt(), left < right))
        })
        .collect();
    let mut rmse = Vec::new();
    let mut monotone = 0;
    for r in runs {
        let (e, m) = r?;
        rmse.push(e);
        monotone += usize::from(m);
    }
    let worst = rmse.iter().cloned().fold(0.0, f64::max);
    let mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
    ensure(
        worst <= 0.25 && monotone >= 18,
        format!("RMSE mean {mean:.3}, max {worst:.3}; profile separated at the step in {monotone}/20 seeds"),
    )
}

fn learner_ordering() -> Check {
    let (data, _) = generate::<f64>(&scenarios::nonlinear(5000, 6)).map_err(|e| e.to_string())?;
    let train: Vec<usize> = (0..4000).collect();
    let test: Vec<usize> = (4000..5000).collect();
    let net = NetworkSpec {
        hidden: Some(vec![32, 32]),
        train: TrainConfig { epochs: 60, learning_rate: 3e-3, ..Default::default() },
        ..Default::default()
    };
    let learners = [LearnerSpec::Sdnn(net.clone()), LearnerSpec::lasso(1.0), LearnerSpec::Dnn(net)];
    let mut lines = Vec::new();
    let mut ok = true;
    for target in [Target::Outcome, Target::Treatment] {
        let mut r2 = [0.0; 3];
        for (k, learner) in learners.iter().enumerate() {
            let f = learner.fit(&data, &train, None, target, 6).map_err(|e| e.to_string())?;
            let (truth, pred): (Vec<f64>, Vec<f64>) =
                test.iter().map(|&i| (target.value(&data.row(i)), f.predict(&data.row(i)))).unzip();
            r2[k] = r_squared(&truth, &pred);
        }
        ok &= r2[0] >= r2[1] + 0.1 && (r2[0] - r2[2]).abs() <= 0.05;
        lines.push(format!("{target:?}: SDNN {:.3}, lasso {:.3}, DNN {:.3}", r2[0], r2[1], r2[2]));
    }
    ensure(ok, lines.join("; "))
}

fn gradient_check() -> Check {
    let activations = [Activation::Tanh, Activation::Sigmoid, Activation::Relu];
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let arch = Architecture {
            nonparametric_inputs: 3,
            parametric_inputs: 2,
            hidden: vec![6, 4],
            activation: activations[k as usize % 3],
        };
        let mut r = rng::stream(k, "criterion-7", 0);
        let mut m = SdnnModel::<f64>::init(arch.clone(), &mut r);
        m.weight_decay = 1e-3;
        let n = 16;
        let u = Array2::from_shape_fn((n, 3), |_| r.sample::<f64, _>(StandardNormal));
        let p = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..n).map(|_| 0.1 + r.random::<f64>()).collect();
        let (_, grad) = m.loss_and_gradient(u.view(), p.view(), &y, &w);
        let base = m.params();
        let h = 1e-4;
        for j in 0..base.len() {
            let mut probe = |delta: f64| {
                let mut q = base.clone();
                q[j] += delta;
                m.set_params(&q).expect("same length");
                m.loss_and_gradient(u.view(), p.view(), &y, &w).0
            };
            let fd = (8.0 * (probe(h) - probe(-h)) - (probe(2.0 * h) - probe(-2.0 * h))) / (12.0 * h);
            let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-5, format!("max relative error {worst:.2e} at 20 parameter points"))
}

fn bootstrap_coverage() -> Check {
    let points: Vec<Vec<f64>> = [-0.5, 0.0, 0.5].iter().map(|&x| vec![x]).collect();
    let cfg = ForestConfig { trees: 20, min_leaf: 10, node_learner: LearnerSpec::lasso(1.0), ..Default::default() };
    let final_learner = LearnerSpec::lasso(1.0);
    let covered: Vec<Result<[bool; 3], String>> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let (data, truth) = generate::<f64>(&scenarios::homogeneous(400, 3, 3, 800 + s)).map_err(|e| e.to_string())?;
            let boot = BootstrapConfig { replicates: 100, level: 0.95, cluster: false, seed: s };
            let est = bootstrap_ci(&data, &ForestConfig { seed: s, ..cfg.clone() }, &cfg.node_learner, &final_learner, &points, &boot)
                .map_err(|e| e.to_string())?;
            let mut hit = [false; 3];
            for (k, e) in est.iter().enumerate() {
                let target = truth.theta(&e.x);
                hit[k] = e.ci_low.is_some_and(|lo| lo <= target) && e.ci_high.is_some_and(|hi| target <= hi);
            }
            Ok(hit)
        })
        .collect();
    let mut counts = [0usize; 3];
    for c in covered {
        for (k, h) in c?.iter().enumerate() {
            counts[k] += usize::from(*h);
        }
    }
    let ok = counts.iter().all(|&c| (180..=198).contains(&c));
    ensure(ok, format!("coverage at x = -0.5, 0, 0.5: {}/200, {}/200, {}/200", counts[0], counts[1], counts[2]))
}

fn dml_and_iv() -> Check {
    let learner = LearnerSpec::lasso(1.0);
    let hits: Vec<Result<bool, String>> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let (data, truth) = generate::<f64>(&scenarios::homogeneous(4000, 50, 3, 900 + s)).map_err(|e| e.to_string())?;
            let plan = CrossFitPlan::new(data.n(), 2, s).map_err(|e| e.to_string())?;
            let est = fit_dml(&data, &learner, &plan, 0.95).map_err(|e| e.to_string())?;
            Ok((est.theta - truth.theta(&[0.0])).abs() <= 3.0 * est.std_error)
        })
        .collect();
    let mut within = 0;
    for h in hits {
        within += usize::from(h?);
    }

    let runs = 20u64;
    let biases: Vec<Result<(f64, f64), String>> = (0..runs)
        .into_par_iter()
        .map(|s| {
            let (data, truth) = generate::<f64>(&scenarios::confounded_iv(5000, 1000 + s)).map_err(|e| e.to_string())?;
            let plan = CrossFitPlan::new(data.n(), 2, s).map_err(|e| e.to_string())?;
            let dml = fit_dml(&data, &learner, &plan, 0.95).map_err(|e| e.to_string())?;
            let iv = fit_dmliv(&data, &learner, &plan, &IvOptions::default(), 0.95).map_err(|e| e.to_string())?;
            let th = truth.theta(&[0.0]);
            Ok((dml.theta - th, iv.theta - th))
        })
        .collect();
    let (mut dml_bias, mut iv_bias) = (0.0, 0.0);
    for b in biases {
        let (d, i) = b?;
        dml_bias += d / runs as f64;
        iv_bias += i / runs as f64;
    }
    ensure(
        within >= 95 && iv_bias.abs() < 0.1 && dml_bias.abs() > 0.3,
        format!("DML within 3 SE in {within}/100; confounded design bias DML {dml_bias:.3}, DMLIV {iv_bias:.3}"),
    )
}

fn pipeline_fingerprint() -> Result<String, String> {
    let (data, _) = generate::<f64>(&scenarios::step(600, 2, 10)).map_err(|e| e.to_string())?;
    let cfg = ForestConfig { trees: 10, min_leaf: 10, node_learner: LearnerSpec::lasso(1.0), seed: 10, ..Default::default() };
    let final_learner = LearnerSpec::lasso(0.01);
    let points: Vec<Vec<f64>> = (0..5).map(|k| vec![-0.8 + 0.4 * k as f64]).collect();
    let model = fit_orf(&data, &cfg).map_err(|e| e.to_string())?;
    let effects = model.estimate_effects(&data, &final_learner, &points).map_err(|e| e.to_string())?;
    let boot = BootstrapConfig { replicates: 20, seed: 10, ..Default::default() };
    let intervals = bootstrap_ci(&data, &cfg, &cfg.node_learner, &final_learner, &points, &boot).map_err(|e| e.to_string())?;
    let (iv_data, _) = generate::<f64>(&scenarios::confounded_iv(1000, 10)).map_err(|e| e.to_string())?;
    let plan = CrossFitPlan::new(iv_data.n(), 3, 10).map_err(|e| e.to_string())?;
    let dml = fit_dml(&iv_data, &LearnerSpec::lasso(1.0), &plan, 0.95).map_err(|e| e.to_string())?;
    let iv = fit_dmliv(&iv_data, &LearnerSpec::lasso(1.0), &plan, &IvOptions::default(), 0.95).map_err(|e| e.to_string())?;
    serde_json::to_string(&(model, effects, intervals, dml, iv)).map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        pool.install(pipeline_fingerprint)
    };
    let a = run(1)?;
    let b = run(1)?;
    let c = run(4)?;
    ensure(a == b && a == c, format!("{} serialized bytes identical across reruns and 1/4 threads", a.len()))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let criteria = [
        Criterion { id: 1, name: "closed-form suite", budget: Duration::from_secs(1), run: closed_form_suite },
        Criterion { id: 2, name: "Newton fixed point", budget: Duration::from_secs(1), run: newton_fixed_point },
        Criterion { id: 3, name: "honesty and weight validity", budget: Duration::from_secs(30), run: honesty_and_weights },
        Criterion { id: 4, name: "homogeneous-effect recovery", budget: minutes(5), run: homogeneous_recovery },
        Criterion { id: 5, name: "heterogeneous-effect recovery", budget: minutes(15), run: heterogeneous_recovery },
        Criterion { id: 6, name: "nuisance-learner ordering", budget: minutes(10), run: learner_ordering },
        Criterion { id: 7, name: "gradient check", budget: Duration::from_secs(10), run: gradient_check },
        Criterion { id: 8, name: "bootstrap coverage", budget: minutes(60), run: bootstrap_coverage },
        Criterion { id: 9, name: "DML and DMLIV", budget: minutes(10), run: dml_and_iv },
        Criterion { id: 10, name: "determinism", budget: minutes(1), run: determinism },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} budget", c.budget)),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {:<32} {}  {} ({:.1} s)",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

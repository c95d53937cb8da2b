#![allow(clippy::needless_range_loop)]

mod common;

use ndarray::Array2;
use orf_core::data::Row;
use orf_core::nuisance::*;
use orf_core::rng;
use rand::Rng;
use rand_distr::StandardNormal;

use common::{dataset, empty, grid_argmin};

#[test]
fn lasso_single_feature_matches_grid() {
    let mut r = rng::stream(3, "lasso-grid", 0);
    let n = 30;
    let raw: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let x = Array2::from_shape_fn((n, 1), |(i, _)| (raw[i] - mean) / sd);
    let y: Vec<f64> = (0..n).map(|i| 0.4 * x[[i, 0]] + 0.5 * r.sample::<f64, _>(StandardNormal)).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let m = fit_weighted_lasso(x.view(), &y, &vec![1.0; n], 1.0).unwrap();

    let sxy: f64 = (0..n).map(|i| x[[i, 0]] * (y[i] - ybar)).sum();
    let sxx: f64 = (0..n).map(|i| x[[i, 0]].powi(2)).sum();
    assert!((m.coefficients[0] - soft_threshold(sxy, 0.5) / sxx).abs() < 1e-10);

    let objective = |b: f64| (0..n).map(|i| (y[i] - ybar - b * x[[i, 0]]).powi(2)).sum::<f64>() + b.abs();
    let grid = grid_argmin(objective, -2.0, 2.0, 1e-7);
    assert!((m.coefficients[0] - grid).abs() < 1e-6);
}

#[test]
fn lasso_weight_scale_invariance() {
    let mut r = rng::stream(4, "lasso-scale", 0);
    let n = 60;
    let x = Array2::from_shape_fn((n, 4), |_| r.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n).map(|i| x[[i, 0]] - x[[i, 3]] + r.sample::<f64, _>(StandardNormal)).collect();
    let w: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let a = fit_weighted_lasso(x.view(), &y, &w, 0.0).unwrap();
    let w3: Vec<f64> = w.iter().map(|v| 3.0 * v).collect();
    let b = fit_weighted_lasso(x.view(), &y, &w3, 0.0).unwrap();
    for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((p - q).abs() < 1e-8);
    }
}

fn linear_data(n: usize, noise: f64, seed: u64) -> orf_core::data::Dataset<f64> {
    let mut r = rng::stream(seed, "linear-data", 0);
    let x = Array2::from_shape_fn((n, 1), |_| r.random::<f64>() * 2.0 - 1.0);
    let wn = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
    let t: Vec<f64> = (0..n).map(|i| 0.5 * wn[[i, 0]] - wn[[i, 1]] + noise * r.sample::<f64, _>(StandardNormal)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 * x[[i, 0]] + 1.5 * wn[[i, 1]] + 3.0 + noise * r.sample::<f64, _>(StandardNormal))
        .collect();
    dataset(y, t, x, empty(n), wn, empty(n))
}

#[test]
fn lasso_pair_recovers_exact_linear_coefficients() {
    let data = linear_data(50, 0.0, 1);
    let rows: Vec<usize> = (0..50).collect();
    let pair = fit_nuisance_pair(&data, &rows, None, &LearnerSpec::lasso(0.0), 0).unwrap();
    for i in 0..50 {
        let row = data.row(i);
        let (ry, rt) = pair.residualize(&row);
        assert!(ry.abs() < 1e-6 && rt.abs() < 1e-6);
    }
    let probe = Row { y: 0.0, t: 0.0, x: &[1.0], wp: &[], wn: &[0.0, 0.0], z: &[] };
    assert!((pair.outcome.predict(&probe) - 5.0).abs() < 1e-6);
    assert!(pair.treatment.predict(&probe).abs() < 1e-6);
}

#[test]
fn weights_on_one_observation_fit_it_exactly() {
    let data = linear_data(20, 1.0, 2);
    let rows: Vec<usize> = (0..20).collect();
    let mut w = vec![0.0; 20];
    w[7] = 1.0;
    let pair = fit_nuisance_pair(&data, &rows, Some(&w), &LearnerSpec::lasso(0.0), 0).unwrap();
    let row = data.row(7);
    assert!((pair.outcome.predict(&row) - row.y).abs() < 1e-12);
    assert!((pair.treatment.predict(&row) - row.t).abs() < 1e-12);
}

#[test]
fn misaligned_weights_are_rejected() {
    let data = linear_data(20, 1.0, 2);
    let rows: Vec<usize> = (0..20).collect();
    let err = fit_nuisance_pair(&data, &rows, Some(&[1.0; 3]), &LearnerSpec::lasso(0.0), 0).unwrap_err();
    assert!(matches!(err, orf_core::Error::Shape(_)));
}

#[test]
fn handrolled_forward_matches() {
    let arch = Architecture { nonparametric_inputs: 3, parametric_inputs: 2, hidden: vec![4, 3], activation: Activation::Tanh };
    let mut r = rng::stream(11, "forward", 0);
    let m = SdnnModel::<f64>::init(arch, &mut r);
    let (x, wn, wp) = ([0.3], [-1.2, 0.7], [2.0, -0.5]);
    let u = [x[0], wn[0], wn[1]];
    let mut a: Vec<f64> = u.to_vec();
    for l in &m.layers {
        let mut next = vec![0.0; l.bias.len()];
        for k in 0..next.len() {
            let mut s = l.bias[k];
            for i in 0..a.len() {
                s += a[i] * l.weights[[i, k]];
            }
            next[k] = s.tanh();
        }
        a = next;
    }
    let mut want = m.intercept;
    for k in 0..a.len() {
        want += a[k] * m.top[k];
    }
    for k in 0..2 {
        want += wp[k] * m.top[a.len() + k];
    }
    let got = sdnn_forward(&m, &wp, &wn, &x).unwrap();
    assert!((got - want).abs() < 1e-12);
}

fn finite_difference_check(arch: Architecture, seed: u64, h: f64) -> f64 {
    let mut r = rng::stream(seed, "grad-check", 0);
    let mut m = SdnnModel::<f64>::init(arch.clone(), &mut r);
    m.weight_decay = 1e-3;
    let n = 12;
    let u = Array2::from_shape_fn((n, arch.nonparametric_inputs), |_| r.sample::<f64, _>(StandardNormal));
    let p = Array2::from_shape_fn((n, arch.parametric_inputs), |_| r.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let w: Vec<f64> = (0..n).map(|_| 0.1 + r.random::<f64>()).collect();
    let (_, grad) = m.loss_and_gradient(u.view(), p.view(), &y, &w);
    let base = m.params();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut probe = |delta: f64| {
            let mut q = base.clone();
            q[k] += delta;
            m.set_params(&q).unwrap();
            m.loss_and_gradient(u.view(), p.view(), &y, &w).0
        };
        let fd = (probe(h) - probe(-h)) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-7);
        worst = worst.max(rel);
    }
    m.set_params(&base).unwrap();
    worst
}

#[test]
fn gradient_matches_finite_differences_on_small_net() {
    // 2 inputs -> 2 hidden -> top over (2 hidden, 1 parametric) + intercept = 10 parameters
    let arch = Architecture { nonparametric_inputs: 2, parametric_inputs: 1, hidden: vec![2], activation: Activation::Tanh };
    assert_eq!(arch.n_params(), 10);
    assert!(finite_difference_check(arch, 1, 1e-6) < 1e-5);
}

#[test]
fn gradient_matches_for_every_activation() {
    for activation in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        let arch = Architecture { nonparametric_inputs: 3, parametric_inputs: 2, hidden: vec![5, 4], activation };
        assert!(finite_difference_check(arch, 2, 1e-5) < 1e-5, "{activation:?}");
    }
}

#[test]
fn zero_target_trains_to_zero() {
    let n = 200;
    let mut r = rng::stream(5, "zero-target", 0);
    let u = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
    let p = Array2::from_shape_fn((n, 1), |_| r.sample::<f64, _>(StandardNormal));
    let y = vec![0.0; n];
    let arch = Architecture { nonparametric_inputs: 2, parametric_inputs: 1, hidden: vec![8], activation: Activation::Relu };
    let cfg = TrainConfig { epochs: 300, learning_rate: 1e-2, seed: 1, ..Default::default() };
    let m = train_sdnn(TrainData { nonparametric: u.view(), parametric: p.view(), targets: &y }, &vec![1.0; n], arch, &cfg).unwrap();
    for i in 0..n {
        let f = m.forward_split(u.row(i).as_slice().unwrap(), p.row(i).as_slice().unwrap()).unwrap();
        assert!(f.abs() < 1e-2, "row {i}: {f}");
    }
}

#[test]
fn parametric_branch_recovers_linear_coefficients() {
    let n = 5000;
    let mut r = rng::stream(6, "linear-wp", 0);
    let u = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
    let p = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n).map(|i| 1.5 * p[[i, 0]] - 0.7 * p[[i, 1]] + 0.1 * r.sample::<f64, _>(StandardNormal)).collect();
    let arch = Architecture { nonparametric_inputs: 2, parametric_inputs: 2, hidden: vec![8], activation: Activation::Relu };
    let cfg = TrainConfig { epochs: 100, learning_rate: 1e-2, weight_decay: 1e-5, seed: 2, ..Default::default() };
    let m = train_sdnn(TrainData { nonparametric: u.view(), parametric: p.view(), targets: &y }, &vec![1.0; n], arch, &cfg).unwrap();
    let w = m.arch.top_width();
    assert!((m.top[w] - 1.5).abs() < 0.05, "{}", m.top[w]);
    assert!((m.top[w + 1] + 0.7).abs() < 0.05, "{}", m.top[w + 1]);
}

#[test]
fn empty_branch_reduces_to_weighted_least_squares() {
    let n = 400;
    let mut r = rng::stream(7, "wls", 0);
    let u = Array2::<f64>::zeros((n, 0));
    let p = Array2::from_shape_fn((n, 3), |_| r.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n).map(|i| 0.5 + p[[i, 0]] - 2.0 * p[[i, 2]] + r.sample::<f64, _>(StandardNormal)).collect();
    let w: Vec<f64> = (0..n).map(|_| 0.5 + r.random::<f64>()).collect();
    let arch = Architecture { nonparametric_inputs: 0, parametric_inputs: 3, hidden: vec![], activation: Activation::Relu };
    let cfg = TrainConfig {
        epochs: 3000,
        batch_size: n,
        learning_rate: 0.05,
        weight_decay: 0.0,
        patience: 3000,
        holdout_fraction: 0.0,
        seed: 3,
        ..Default::default()
    };
    let m = train_sdnn(TrainData { nonparametric: u.view(), parametric: p.view(), targets: &y }, &w, arch, &cfg).unwrap();
    let design = orf_core::linalg::with_intercept(p.view());
    let wls = orf_core::linalg::weighted_least_squares(design.view(), &y, &w).unwrap();
    assert!((m.intercept - wls.coefficients[0]).abs() < 1e-3);
    for k in 0..3 {
        assert!((m.top[k] - wls.coefficients[k + 1]).abs() < 1e-3, "coef {k}");
    }
}

#[test]
fn training_never_worse_than_initialization_and_is_deterministic() {
    let n = 300;
    let mut r = rng::stream(8, "monotone", 0);
    let u = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
    let p = Array2::from_shape_fn((n, 1), |_| r.sample::<f64, _>(StandardNormal));
    let y: Vec<f64> = (0..n).map(|i| u[[i, 0]].sin() + p[[i, 0]]).collect();
    let arch = Architecture { nonparametric_inputs: 2, parametric_inputs: 1, hidden: vec![6], activation: Activation::Relu };
    let cfg = TrainConfig { epochs: 20, seed: 4, ..Default::default() };
    let data = TrainData { nonparametric: u.view(), parametric: p.view(), targets: &y };
    let a = train_sdnn(data, &vec![1.0; n], arch.clone(), &cfg).unwrap();
    let b = train_sdnn(data, &vec![1.0; n], arch.clone(), &cfg).unwrap();
    assert_eq!(a.params(), b.params());
    let init = SdnnModel::<f64>::init(arch, &mut rng::stream(4, "train-sdnn", 0));
    let loss = |m: &SdnnModel<f64>| {
        (0..n)
            .map(|i| (m.forward_split(u.row(i).as_slice().unwrap(), p.row(i).as_slice().unwrap()).unwrap() - y[i]).powi(2))
            .sum::<f64>()
    };
    assert!(a.params().iter().all(|v| v.is_finite()));
    assert!(loss(&a) <= loss(&init));
}

#[test]
fn divergence_is_reported() {
    let n = 50;
    let u = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
    let p = Array2::<f64>::zeros((n, 0));
    let y: Vec<f64> = (0..n).map(|i| 1e200 * i as f64).collect();
    let arch = Architecture { nonparametric_inputs: 1, parametric_inputs: 0, hidden: vec![3], activation: Activation::Relu };
    let cfg = TrainConfig { epochs: 5, seed: 0, ..Default::default() };
    let err = train_sdnn(TrainData { nonparametric: u.view(), parametric: p.view(), targets: &y }, &vec![1.0; n], arch, &cfg);
    assert!(matches!(err, Err(orf_core::Error::Divergence { .. })));
}

#[test]
fn exported_network_round_trips() {
    let arch = Architecture { nonparametric_inputs: 2, parametric_inputs: 1, hidden: vec![3], activation: Activation::Sigmoid };
    let m = SdnnModel::<f64>::init(arch, &mut rng::stream(1, "export", 0));
    let doc = serde_json::to_string(&m.export()).unwrap();
    let back = SdnnModel::<f64>::from_export(&serde_json::from_str(&doc).unwrap()).unwrap();
    assert_eq!(back.params(), m.params());
}

#[test]
fn resampling_respects_weights() {
    let rows: Vec<usize> = (10..15).collect();
    let w = [1.0, 0.0, 2.0, 1.0, 0.5];
    let drawn = resample_by_weights(&rows, &w, 2.5, 9).unwrap();
    assert_eq!(drawn.len(), 13);
    assert!(!drawn.contains(&11));
    assert!(drawn.iter().all(|i| rows.contains(i)));
}

#[test]
fn sdnn_beats_lasso_on_nonlinear_confounding() {
    let n = 5000;
    let mut r = rng::stream(12, "sdnn-vs-lasso", 0);
    let x = Array2::from_shape_fn((n, 1), |_| r.random::<f64>() * 2.0 - 1.0);
    let wp = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
    let wn = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal) * 1.5);
    let y: Vec<f64> =
        (0..n).map(|i| wp[[i, 0]] - 0.5 * wp[[i, 1]] + 2.0 * wn[[i, 0]].sin() + 0.2 * r.sample::<f64, _>(StandardNormal)).collect();
    let t: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let data = dataset(y, t, x, wp, wn, empty(n));
    let train: Vec<usize> = (0..4000).collect();
    let test: Vec<usize> = (4000..n).collect();
    let sdnn = LearnerSpec::Sdnn(NetworkSpec {
        hidden: Some(vec![32, 32]),
        train: TrainConfig { epochs: 60, learning_rate: 3e-3, ..Default::default() },
        ..Default::default()
    });
    let r2 = |learner: &LearnerSpec| {
        let f = learner.fit(&data, &train, None, Target::Outcome, 1).unwrap();
        let (truth, pred): (Vec<f64>, Vec<f64>) = test.iter().map(|&i| (data.row(i).y, f.predict(&data.row(i)))).unzip();
        r_squared(&truth, &pred)
    };
    let (s, l) = (r2(&sdnn), r2(&LearnerSpec::lasso(0.0)));
    assert!(s >= l + 0.1, "sdnn {s} lasso {l}");
}

#[test]
fn learner_specs_parse_and_reject_unknown_keys() {
    let sdnn: LearnerSpec = serde_json::from_str(r#"{"kind": "sdnn", "hidden": [4], "train": {"epochs": 3}}"#).unwrap();
    match sdnn {
        LearnerSpec::Sdnn(spec) => {
            assert_eq!(spec.hidden, Some(vec![4]));
            assert_eq!(spec.train.epochs, 3);
        }
        other => panic!("{other:?}"),
    }
    let lasso: LearnerSpec = serde_json::from_str(r#"{"kind": "lasso", "lambda": 0.5}"#).unwrap();
    assert_eq!(lasso, LearnerSpec::lasso(0.5));
    for bad in [
        r#"{"kind": "lasso", "lambda": 0.5, "lamda": 1.0}"#,
        r#"{"kind": "dnn", "hiden": [4]}"#,
        r#"{"kind": "dnn", "train": {"epoch": 3}}"#,
        r#"{"kind": "forest"}"#,
    ] {
        assert!(serde_json::from_str::<LearnerSpec>(bad).is_err(), "{bad}");
    }
}

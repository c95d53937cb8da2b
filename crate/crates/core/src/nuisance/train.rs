use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::lasso::check_weights;
use super::network::{Architecture, SdnnModel};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant,
    /// `lr * gamma^epoch`
    Exponential { gamma: f64 },
    /// `lr / (1 + rate * epoch)`
    InverseTime { rate: f64 },
}

impl StepSchedule {
    fn rate(self, initial: f64, epoch: usize) -> f64 {
        match self {
            StepSchedule::Constant => initial,
            StepSchedule::Exponential { gamma } => initial * gamma.powi(epoch as i32),
            StepSchedule::InverseTime { rate } => initial / (1.0 + rate * epoch as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: StepSchedule,
    pub weight_decay: f64,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            schedule: StepSchedule::Constant,
            weight_decay: 1e-4,
            patience: 10,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("epochs, batch_size and patience must be positive".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 || self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive and weight_decay non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Inputs for network training, already split by branch.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a, T> {
    pub nonparametric: ArrayView2<'a, T>,
    pub parametric: ArrayView2<'a, T>,
    pub targets: &'a [T],
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], step: 0 }
    }

    fn update(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.step += 1;
        let (b1, b2) = (T::lit(Self::BETA1), T::lit(Self::BETA2));
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let (lr, eps) = (T::lit(lr), T::lit(Self::EPS));
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

fn weighted_loss<T: Real>(model: &SdnnModel<T>, data: &TrainData<'_, T>, weights: &[T], rows: &[usize]) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for &i in rows {
        let u = data.nonparametric.row(i);
        let p = data.parametric.row(i);
        let f = model.eval_row(u.as_slice().expect("standard layout"), p.as_slice().expect("standard layout"));
        let e = f - data.targets[i];
        num += weights[i] * e * e;
        den += weights[i];
    }
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

/// Minibatch Adam on the weighted squared error plus L2 weight decay.
///
/// Weights are normalized to sum to one inside each batch. A held-out slice
/// drives early stopping and the returned parameters are the best seen on
/// it, the initial ones included.
pub fn train_sdnn<T: Real>(
    data: TrainData<'_, T>,
    weights: &[T],
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<SdnnModel<T>> {
    cfg.validate()?;
    let n = data.targets.len();
    if data.nonparametric.nrows() != n || data.parametric.nrows() != n || weights.len() != n {
        return Err(Error::Shape("training blocks, targets and weights differ in length".into()));
    }
    if data.nonparametric.ncols() != arch.nonparametric_inputs || data.parametric.ncols() != arch.parametric_inputs {
        return Err(Error::Shape("training inputs do not match the architecture".into()));
    }
    check_weights(weights)?;
    let nonparametric = data.nonparametric.as_standard_layout();
    let parametric = data.parametric.as_standard_layout();
    let data = TrainData { nonparametric: nonparametric.view(), parametric: parametric.view(), targets: data.targets };

    let mut order: Vec<usize> = (0..n).filter(|&i| weights[i] > T::zero()).collect();
    let mut r = rng::stream(cfg.seed, "train-sdnn", 0);
    order.shuffle(&mut r);
    let n_hold = if order.len() >= 10 { ((order.len() as f64) * cfg.holdout_fraction).round() as usize } else { 0 };
    let holdout: Vec<usize> = order[..n_hold].to_vec();
    let mut train: Vec<usize> = order[n_hold..].to_vec();
    let monitor = if holdout.is_empty() { train.clone() } else { holdout.clone() };

    let mut model = SdnnModel::init(arch, &mut r);
    model.weight_decay = T::lit(cfg.weight_decay);
    let mut params = model.params();
    let mut best = params.clone();
    let mut best_loss = weighted_loss(&model, &data, weights, &monitor);
    let mut stale = 0;
    let mut adam = Adam::new(params.len());

    for epoch in 0..cfg.epochs {
        train.shuffle(&mut r);
        let lr = cfg.schedule.rate(cfg.learning_rate, epoch);
        for batch in train.chunks(cfg.batch_size) {
            let u = data.nonparametric.select(Axis(0), batch);
            let p = data.parametric.select(Axis(0), batch);
            let y: Vec<T> = batch.iter().map(|&i| data.targets[i]).collect();
            let w: Vec<T> = batch.iter().map(|&i| weights[i]).collect();
            let (loss, grad) = model.loss_and_gradient(u.view(), p.view(), &y, &w);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            adam.update(&mut params, &grad, lr);
            model.set_params(&params)?;
        }
        let val = weighted_loss(&model, &data, weights, &monitor);
        if !val.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if val < best_loss {
            best_loss = val;
            best.clone_from(&params);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.set_params(&best)?;
    Ok(model)
}

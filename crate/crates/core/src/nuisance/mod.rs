//! Weighted regression learners for the outcome and treatment nuisances.

mod lasso;
mod network;
mod oracle;
mod resample;
mod train;

pub use lasso::{fit_weighted_lasso, fit_weighted_lasso_with, lasso_objective, soft_threshold, LassoOptions, LinearModel};
pub use network::{sdnn_forward, Activation, Architecture, ExportedNetwork, Layer, SdnnModel};
pub use oracle::OracleLearner;
pub use resample::resample_by_weights;
pub use train::{train_sdnn, StepSchedule, TrainConfig, TrainData};

use std::fmt::Debug;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Row};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which column a nuisance model predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Outcome,
    Treatment,
    Instrument(usize),
}

impl Target {
    pub fn value<T: Real>(self, row: &Row<'_, T>) -> T {
        match self {
            Target::Outcome => row.y,
            Target::Treatment => row.t,
            Target::Instrument(j) => row.z[j],
        }
    }

    fn label(self) -> u64 {
        match self {
            Target::Outcome => 0,
            Target::Treatment => 1,
            Target::Instrument(j) => 2 + j as u64,
        }
    }
}

pub trait Predictor<T>: Send + Sync + Debug {
    /// Prediction from the covariates `(x, wp, wn)` of `row`.
    fn predict(&self, row: &Row<'_, T>) -> T;
}

pub type SharedPredictor<T> = Arc<dyn Predictor<T>>;

/// Fits a predictor for one target on a subset of rows, optionally weighted.
pub trait NuisanceLearner<T: Real>: Send + Sync {
    fn fit(
        &self,
        data: &Dataset<T>,
        rows: &[usize],
        weights: Option<&[T]>,
        target: Target,
        seed: u64,
    ) -> Result<SharedPredictor<T>>;
}

#[derive(Clone, Debug)]
pub struct NuisancePair<T> {
    pub outcome: SharedPredictor<T>,
    pub treatment: SharedPredictor<T>,
}

impl<T: Real> NuisancePair<T> {
    /// `(y - q(x, w), t - g(x, w))` for one row.
    pub fn residualize(&self, row: &Row<'_, T>) -> (T, T) {
        (row.y - self.outcome.predict(row), row.t - self.treatment.predict(row))
    }
}

/// Fits `q` on `Y` and `g` on `T` over `rows`. `weights`, when given, are
/// aligned with `rows`.
pub fn fit_nuisance_pair<T: Real>(
    data: &Dataset<T>,
    rows: &[usize],
    weights: Option<&[T]>,
    learner: &dyn NuisanceLearner<T>,
    seed: u64,
) -> Result<NuisancePair<T>> {
    if rows.is_empty() {
        return Err(Error::Size("cannot fit nuisances on an empty index set".into()));
    }
    if let Some(w) = weights {
        if w.len() != rows.len() {
            return Err(Error::Shape(format!("{} weights for {} rows", w.len(), rows.len())));
        }
    }
    Ok(NuisancePair {
        outcome: learner.fit(data, rows, weights, Target::Outcome, seed)?,
        treatment: learner.fit(data, rows, weights, Target::Treatment, seed)?,
    })
}

/// Serializable learner choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    /// Weighted mean of the target.
    Mean,
    /// Weighted lasso on `(x, wp, wn)`.
    Lasso {
        lambda: f64,
        #[serde(default)]
        options: Option<LassoOptions>,
    },
    /// Dense network over all covariates.
    Dnn(NetworkSpec),
    /// Semi-parametric network: `wp` enters the top layer linearly.
    Sdnn(NetworkSpec),
}

impl LearnerSpec {
    pub fn lasso(lambda: f64) -> Self {
        LearnerSpec::Lasso { lambda, options: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    /// Hidden widths, bottom first. Defaults to two layers of
    /// `min(100, 4 * branch inputs)`.
    pub hidden: Option<Vec<usize>>,
    pub activation: Activation,
    pub train: TrainConfig,
    /// Resampled training-set size as a multiple of the weighted view.
    pub resample_factor: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self { hidden: None, activation: Activation::Relu, train: TrainConfig::default(), resample_factor: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    Semiparametric,
    Dense,
}

/// Splits a row into the network's branch inputs.
fn branch_inputs<T: Real>(layout: Layout, row: &Row<'_, T>, u: &mut Vec<T>, p: &mut Vec<T>) {
    u.clear();
    p.clear();
    u.extend_from_slice(row.x);
    match layout {
        Layout::Semiparametric => {
            u.extend_from_slice(row.wn);
            p.extend_from_slice(row.wp);
        }
        Layout::Dense => {
            u.extend_from_slice(row.wp);
            u.extend_from_slice(row.wn);
        }
    }
}

#[derive(Clone, Debug)]
struct Standardizer<T> {
    mean: Vec<T>,
    scale: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    fn fit(m: &Array2<T>) -> Self {
        let n = T::from_count(m.nrows().max(1));
        let mut mean = Vec::with_capacity(m.ncols());
        let mut scale = Vec::with_capacity(m.ncols());
        for c in m.columns() {
            let mu = c.iter().copied().sum::<T>() / n;
            let var = c.iter().map(|v| (*v - mu) * (*v - mu)).sum::<T>() / n;
            mean.push(mu);
            scale.push(if var.sqrt() > T::epsilon() { var.sqrt() } else { T::one() });
        }
        Self { mean, scale }
    }

    fn apply_in_place(&self, m: &mut Array2<T>) {
        for mut r in m.rows_mut() {
            for (j, v) in r.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
    }

    fn apply_slice(&self, v: &mut [T]) {
        for (j, x) in v.iter_mut().enumerate() {
            *x = (*x - self.mean[j]) / self.scale[j];
        }
    }
}

/// Network plus the input/target standardization it was trained under.
#[derive(Clone, Debug)]
pub struct NetworkRegressor<T: Real> {
    pub model: SdnnModel<T>,
    layout: Layout,
    inputs_np: Standardizer<T>,
    inputs_p: Standardizer<T>,
    target_mean: T,
    target_scale: T,
}

impl<T: Real> Predictor<T> for NetworkRegressor<T> {
    fn predict(&self, row: &Row<'_, T>) -> T {
        let (mut u, mut p) = (Vec::new(), Vec::new());
        branch_inputs(self.layout, row, &mut u, &mut p);
        self.inputs_np.apply_slice(&mut u);
        self.inputs_p.apply_slice(&mut p);
        self.target_mean + self.target_scale * self.model.eval_row(&u, &p)
    }
}

#[derive(Clone, Debug)]
struct LinearPredictor<T: Real> {
    model: LinearModel<T>,
}

impl<T: Real> Predictor<T> for LinearPredictor<T> {
    fn predict(&self, row: &Row<'_, T>) -> T {
        let c = &self.model.coefficients;
        let mut acc = self.model.intercept;
        for (b, v) in c.iter().zip(row.x.iter().chain(row.wp).chain(row.wn)) {
            acc += *b * *v;
        }
        acc
    }
}

#[derive(Clone, Copy, Debug)]
struct ConstantPredictor<T>(T);

impl<T: Real> Predictor<T> for ConstantPredictor<T> {
    fn predict(&self, _row: &Row<'_, T>) -> T {
        self.0
    }
}

/// Design matrix `(x | wp | wn)` over `rows`.
pub fn covariate_matrix<T: Real>(data: &Dataset<T>, rows: &[usize]) -> Array2<T> {
    let dims = data.dims();
    let width = dims.d + dims.p_parametric + dims.p_nonparametric;
    let mut m = Array2::zeros((rows.len(), width));
    for (k, &i) in rows.iter().enumerate() {
        let r = data.row(i);
        for (dst, src) in m.row_mut(k).iter_mut().zip(r.x.iter().chain(r.wp).chain(r.wn)) {
            *dst = *src;
        }
    }
    m
}

impl LearnerSpec {
    fn network_arch<T: Real>(&self, data: &Dataset<T>, net: &NetworkSpec, layout: Layout) -> Architecture {
        let dims = data.dims();
        let (np, p) = match layout {
            Layout::Semiparametric => (dims.d + dims.p_nonparametric, dims.p_parametric),
            Layout::Dense => (dims.d + dims.p_parametric + dims.p_nonparametric, 0),
        };
        let hidden = net.hidden.clone().unwrap_or_else(|| {
            let w = (4 * np).clamp(1, 100);
            vec![w, w]
        });
        Architecture { nonparametric_inputs: np, parametric_inputs: p, hidden, activation: net.activation }
    }

    #[allow(clippy::too_many_arguments)]
    fn fit_network<T: Real>(
        &self,
        net: &NetworkSpec,
        layout: Layout,
        data: &Dataset<T>,
        rows: &[usize],
        weights: Option<&[T]>,
        target: Target,
        seed: u64,
    ) -> Result<SharedPredictor<T>> {
        let seed = crate::rng::derive_seed(seed, "network", target.label());
        let train_rows = match weights {
            Some(w) => resample_by_weights(rows, w, net.resample_factor, seed)?,
            None => rows.to_vec(),
        };
        let arch = self.network_arch(data, net, layout);
        let n = train_rows.len();
        let mut u = Array2::zeros((n, arch.nonparametric_inputs));
        let mut p = Array2::zeros((n, arch.parametric_inputs));
        let mut y = Vec::with_capacity(n);
        let (mut bu, mut bp) = (Vec::new(), Vec::new());
        for (k, &i) in train_rows.iter().enumerate() {
            let r = data.row(i);
            branch_inputs(layout, &r, &mut bu, &mut bp);
            u.row_mut(k).iter_mut().zip(&bu).for_each(|(d, s)| *d = *s);
            p.row_mut(k).iter_mut().zip(&bp).for_each(|(d, s)| *d = *s);
            y.push(target.value(&r));
        }
        let inputs_np = Standardizer::fit(&u);
        let inputs_p = Standardizer::fit(&p);
        inputs_np.apply_in_place(&mut u);
        inputs_p.apply_in_place(&mut p);
        let ycol = Array2::from_shape_vec((n, 1), y.clone()).expect("shape");
        let ys = Standardizer::fit(&ycol);
        let (target_mean, target_scale) = (ys.mean[0], ys.scale[0]);
        let y: Vec<T> = y.iter().map(|v| (*v - target_mean) / target_scale).collect();
        let cfg = TrainConfig { seed, ..net.train.clone() };
        let model = train_sdnn(
            TrainData { nonparametric: u.view(), parametric: p.view(), targets: &y },
            &vec![T::one(); n],
            arch,
            &cfg,
        )?;
        Ok(Arc::new(NetworkRegressor { model, layout, inputs_np, inputs_p, target_mean, target_scale }))
    }
}

impl<T: Real> NuisanceLearner<T> for LearnerSpec {
    fn fit(
        &self,
        data: &Dataset<T>,
        rows: &[usize],
        weights: Option<&[T]>,
        target: Target,
        seed: u64,
    ) -> Result<SharedPredictor<T>> {
        if rows.is_empty() {
            return Err(Error::Size("no rows to fit".into()));
        }
        match self {
            LearnerSpec::Mean => {
                let (mut num, mut den) = (T::zero(), T::zero());
                for (k, &i) in rows.iter().enumerate() {
                    let w = weights.map_or(T::one(), |w| w[k]);
                    num += w * target.value(&data.row(i));
                    den += w;
                }
                if den <= T::zero() {
                    return Err(Error::Weight("all weights are zero".into()));
                }
                Ok(Arc::new(ConstantPredictor(num / den)))
            }
            LearnerSpec::Lasso { lambda, options } => {
                let (rows, w): (Vec<usize>, Vec<T>) = match weights {
                    Some(w) => rows
                        .iter()
                        .zip(w)
                        .filter(|(_, w)| **w > T::zero())
                        .map(|(i, w)| (*i, *w))
                        .unzip(),
                    None => (rows.to_vec(), vec![T::one(); rows.len()]),
                };
                if rows.is_empty() {
                    return Err(Error::Weight("all weights are zero".into()));
                }
                let m = covariate_matrix(data, &rows);
                let y: Vec<T> = rows.iter().map(|&i| target.value(&data.row(i))).collect();
                let model =
                    fit_weighted_lasso_with(m.view(), &y, &w, T::lit(*lambda), options.unwrap_or_default(), None)?;
                Ok(Arc::new(LinearPredictor { model }))
            }
            LearnerSpec::Dnn(net) => self.fit_network(net, Layout::Dense, data, rows, weights, target, seed),
            LearnerSpec::Sdnn(net) => self.fit_network(net, Layout::Semiparametric, data, rows, weights, target, seed),
        }
    }
}

/// Coefficient of determination of `pred` against `truth`.
pub fn r_squared<T: Real>(truth: &[T], pred: &[T]) -> T {
    let n = T::from_count(truth.len());
    let mean = truth.iter().copied().sum::<T>() / n;
    let ss_tot: T = truth.iter().map(|v| (*v - mean) * (*v - mean)).sum();
    let ss_res: T = truth.iter().zip(pred).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
    T::one() - ss_res / ss_tot
}

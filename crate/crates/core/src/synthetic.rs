//! Synthetic partially linear data with known effect and nuisance
//! functions, scenario presets, and scoring against the truth.
//!
//! Structural equations:
//!
//! ```text
//! T = g0(X, W) + pi Z + c_t U + eta
//! Y = theta0(X) T + f0(X, W) + c_y U + eps
//! ```
//!
//! `Z` (instrument) and `U` (hidden confounder) are optional, standard
//! normal and independent of `(X, W)`, so `E[T | X, W] = g0` and
//! `E[Y | X, W] = theta0(X) g0 + f0` in every configuration.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnSpec, Dataset, DatasetSchema, Role, Row};
use crate::error::{Error, Result};
use crate::forest::EffectEstimate;
use crate::nuisance::OracleLearner;
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSpec {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64, feature: usize },
    /// `low` below `at`, `high` above, their midpoint at `at`.
    Step { low: f64, high: f64, at: f64, feature: usize },
    /// `amplitude * sin(pi * frequency * x)`.
    Sinusoid { amplitude: f64, frequency: f64, feature: usize },
}

impl ThetaSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            ThetaSpec::Constant { value } => value,
            ThetaSpec::Affine { intercept, slope, feature } => intercept + slope * x[feature],
            ThetaSpec::Step { low, high, at, feature } => {
                let v = x[feature];
                if v < at {
                    low
                } else if v > at {
                    high
                } else {
                    0.5 * (low + high)
                }
            }
            ThetaSpec::Sinusoid { amplitude, frequency, feature } => {
                amplitude * (std::f64::consts::PI * frequency * x[feature]).sin()
            }
        }
    }

    fn feature(&self) -> Option<usize> {
        match *self {
            ThetaSpec::Constant { .. } => None,
            ThetaSpec::Affine { feature, .. }
            | ThetaSpec::Step { feature, .. }
            | ThetaSpec::Sinusoid { feature, .. } => Some(feature),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    X,
    Wp,
    Wn,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    #[default]
    Linear,
    Square,
    Sin,
    Tanh,
    Abs,
    /// `1{v > 0}`
    Positive,
}

impl Shape {
    fn apply(self, v: f64) -> f64 {
        match self {
            Shape::Linear => v,
            Shape::Square => v * v,
            Shape::Sin => v.sin(),
            Shape::Tanh => v.tanh(),
            Shape::Abs => v.abs(),
            Shape::Positive => f64::from(u8::from(v > 0.0)),
        }
    }
}

/// `coef * shape(column)`, optionally multiplied by a second linear column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub block: Block,
    pub index: usize,
    pub coef: f64,
    #[serde(default)]
    pub shape: Shape,
    #[serde(default)]
    pub times: Option<(Block, usize)>,
}

impl Term {
    pub fn linear(block: Block, index: usize, coef: f64) -> Self {
        Self { block, index, coef, shape: Shape::Linear, times: None }
    }

    pub fn shaped(block: Block, index: usize, coef: f64, shape: Shape) -> Self {
        Self { block, index, coef, shape, times: None }
    }

    pub fn product(a: (Block, usize), b: (Block, usize), coef: f64) -> Self {
        Self { block: a.0, index: a.1, coef, shape: Shape::Linear, times: Some(b) }
    }

    fn eval(&self, c: &Covariates<'_>) -> f64 {
        let base = self.coef * self.shape.apply(c.get(self.block, self.index));
        match self.times {
            Some((b, j)) => base * c.get(b, j),
            None => base,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateDist {
    #[default]
    Normal,
    Uniform { low: f64, high: f64 },
}

/// How the parametric block is drawn: continuous like the other controls,
/// or as a one-hot indicator of a uniformly drawn category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParametricKind {
    #[default]
    Continuous,
    OneHot,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Confounder {
    pub treatment: f64,
    pub outcome: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    pub d: usize,
    pub p_parametric: usize,
    pub p_nonparametric: usize,
    pub theta: ThetaSpec,
    /// Terms of `g0`.
    pub treatment_terms: Vec<Term>,
    /// Terms of `f0`.
    pub outcome_terms: Vec<Term>,
    pub sigma_eps: f64,
    pub sigma_eta: f64,
    pub features: CovariateDist,
    pub controls: CovariateDist,
    pub parametric: ParametricKind,
    /// First-stage coefficient of a standard normal instrument.
    pub instrument: Option<f64>,
    pub confounder: Option<Confounder>,
    /// Number of clusters for a group column (rows assigned round-robin).
    pub groups: Option<usize>,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 1,
            p_parametric: 0,
            p_nonparametric: 0,
            theta: ThetaSpec::Constant { value: 1.0 },
            treatment_terms: Vec::new(),
            outcome_terms: Vec::new(),
            sigma_eps: 1.0,
            sigma_eta: 1.0,
            features: CovariateDist::Uniform { low: -1.0, high: 1.0 },
            controls: CovariateDist::Normal,
            parametric: ParametricKind::Continuous,
            instrument: None,
            confounder: None,
            groups: None,
            seed: 0,
        }
    }
}

struct Covariates<'a> {
    x: &'a [f64],
    wp: &'a [f64],
    wn: &'a [f64],
}

impl Covariates<'_> {
    fn get(&self, block: Block, j: usize) -> f64 {
        match block {
            Block::X => self.x[j],
            Block::Wp => self.wp[j],
            Block::Wn => self.wn[j],
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("dgp.n must be >= 2, got {}", self.n)));
        }
        if self.d == 0 {
            return Err(Error::Config("dgp.d must be >= 1".into()));
        }
        for (name, s) in [("sigma_eps", self.sigma_eps), ("sigma_eta", self.sigma_eta)] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("dgp.{name} must be finite and >= 0")));
            }
        }
        if let CovariateDist::Uniform { low, high } = self.features {
            if low.is_nan() || high.is_nan() || low >= high {
                return Err(Error::Config("dgp.features uniform bounds must satisfy low < high".into()));
            }
        }
        if let CovariateDist::Uniform { low, high } = self.controls {
            if low.is_nan() || high.is_nan() || low >= high {
                return Err(Error::Config("dgp.controls uniform bounds must satisfy low < high".into()));
            }
        }
        if self.theta.feature().is_some_and(|j| j >= self.d) {
            return Err(Error::Config("dgp.theta refers to a feature beyond d".into()));
        }
        let width = |b: Block| match b {
            Block::X => self.d,
            Block::Wp => self.p_parametric,
            Block::Wn => self.p_nonparametric,
        };
        for t in self.treatment_terms.iter().chain(&self.outcome_terms) {
            let refs = std::iter::once((t.block, t.index)).chain(t.times);
            if let Some((b, j)) = refs.into_iter().find(|&(b, j)| j >= width(b)) {
                return Err(Error::Config(format!("dgp term refers to {b:?}[{j}] beyond its block width")));
            }
        }
        if self.groups == Some(0) {
            return Err(Error::Config("dgp.groups must be >= 1".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> DatasetSchema {
        let mut cols = vec![
            ("y".to_string(), ColumnSpec::new(Role::Outcome)),
            ("t".to_string(), ColumnSpec::new(Role::Treatment)),
        ];
        cols.extend((0..self.d).map(|j| (format!("x{j}"), ColumnSpec::new(Role::Feature))));
        cols.extend((0..self.p_parametric).map(|j| (format!("wp{j}"), ColumnSpec::new(Role::Parametric))));
        cols.extend((0..self.p_nonparametric).map(|j| (format!("wn{j}"), ColumnSpec::new(Role::Nonparametric))));
        if self.instrument.is_some() {
            cols.push(("z0".to_string(), ColumnSpec::new(Role::Instrument)));
        }
        if self.groups.is_some() {
            cols.push(("group".to_string(), ColumnSpec::new(Role::Group)));
        }
        DatasetSchema::new(cols).expect("generated schema is valid")
    }
}

/// Known structural functions of a [`DgpSpec`].
#[derive(Clone, Debug)]
pub struct Truth {
    spec: Arc<DgpSpec>,
}

impl Truth {
    pub fn spec(&self) -> &DgpSpec {
        &self.spec
    }

    pub fn theta(&self, x: &[f64]) -> f64 {
        self.spec.theta.eval(x)
    }

    pub fn g0(&self, x: &[f64], wp: &[f64], wn: &[f64]) -> f64 {
        let c = Covariates { x, wp, wn };
        self.spec.treatment_terms.iter().map(|t| t.eval(&c)).sum()
    }

    pub fn f0(&self, x: &[f64], wp: &[f64], wn: &[f64]) -> f64 {
        let c = Covariates { x, wp, wn };
        self.spec.outcome_terms.iter().map(|t| t.eval(&c)).sum()
    }

    /// `E[Y | X, W]`.
    pub fn q0(&self, x: &[f64], wp: &[f64], wn: &[f64]) -> f64 {
        self.theta(x) * self.g0(x, wp, wn) + self.f0(x, wp, wn)
    }

    /// Variance of `T - g0(X, W)`.
    pub fn treatment_residual_variance(&self) -> f64 {
        let s = &self.spec;
        s.sigma_eta.powi(2) + s.instrument.map_or(0.0, |p| p * p) + s.confounder.map_or(0.0, |c| c.treatment.powi(2))
    }

    /// Probability limit of the partialling-out estimator's bias caused by
    /// the hidden confounder, `c_t c_y / Var(T - g0)`.
    pub fn confounding_bias(&self) -> f64 {
        self.spec.confounder.map_or(0.0, |c| c.treatment * c.outcome / self.treatment_residual_variance())
    }

    fn row_f64<T: Real>(row: &Row<'_, T>) -> [Vec<f64>; 3] {
        let f = |s: &[T]| s.iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
        [f(row.x), f(row.wp), f(row.wn)]
    }

    /// Learner returning the true `q0`, `g0` and a zero instrument mean.
    pub fn oracle_learner<T: Real>(&self) -> OracleLearner<T> {
        let (a, b) = (self.clone(), self.clone());
        OracleLearner::new(
            move |r: &Row<'_, T>| {
                let [x, wp, wn] = Self::row_f64(r);
                T::lit(a.q0(&x, &wp, &wn))
            },
            move |r: &Row<'_, T>| {
                let [x, wp, wn] = Self::row_f64(r);
                T::lit(b.g0(&x, &wp, &wn))
            },
        )
        .with_instrument(|_: &Row<'_, T>| T::zero())
    }
}

fn draw(dist: CovariateDist, r: &mut rng::Rng) -> f64 {
    match dist {
        CovariateDist::Normal => r.sample(rand_distr::StandardNormal),
        CovariateDist::Uniform { low, high } => Uniform::new(low, high).expect("validated bounds").sample(r),
    }
}

fn noise(sigma: f64, r: &mut rng::Rng) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("validated sigma").sample(r)
    }
}

/// Draws a dataset from `spec`. Deterministic in `spec.seed`.
pub fn generate<T: Real>(spec: &DgpSpec) -> Result<(Dataset<T>, Truth)> {
    spec.validate()?;
    let truth = Truth { spec: Arc::new(spec.clone()) };
    let n = spec.n;
    let mut cov = rng::stream(spec.seed, "dgp-covariates", 0);
    let mut err = rng::stream(spec.seed, "dgp-noise", 0);
    let mut latent = rng::stream(spec.seed, "dgp-latent", 0);

    let x = Array2::from_shape_simple_fn((n, spec.d), || draw(spec.features, &mut cov));
    let wp = match spec.parametric {
        ParametricKind::Continuous => {
            Array2::from_shape_simple_fn((n, spec.p_parametric), || draw(spec.controls, &mut cov))
        }
        ParametricKind::OneHot => {
            let mut m = Array2::zeros((n, spec.p_parametric));
            if spec.p_parametric > 0 {
                for mut row in m.rows_mut() {
                    row[cov.random_range(0..spec.p_parametric)] = 1.0;
                }
            }
            m
        }
    };
    let wn = Array2::from_shape_simple_fn((n, spec.p_nonparametric), || draw(spec.controls, &mut cov));

    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let (xi, wpi, wni) = (x.row(i), wp.row(i), wn.row(i));
        let (xi, wpi, wni) = (xi.as_slice().unwrap(), wpi.as_slice().unwrap(), wni.as_slice().unwrap());
        let mut ti = truth.g0(xi, wpi, wni) + noise(spec.sigma_eta, &mut err);
        let mut yi = truth.f0(xi, wpi, wni) + noise(spec.sigma_eps, &mut err);
        if let Some(pi) = spec.instrument {
            let zi: f64 = latent.sample(rand_distr::StandardNormal);
            ti += pi * zi;
            z.push(zi);
        }
        if let Some(c) = spec.confounder {
            let u: f64 = latent.sample(rand_distr::StandardNormal);
            ti += c.treatment * u;
            yi += c.outcome * u;
        }
        yi += truth.theta(xi) * ti;
        y.push(yi);
        t.push(ti);
    }

    let cast = |m: &Array2<f64>| m.mapv(T::lit);
    let z = Array2::from_shape_vec((n, usize::from(spec.instrument.is_some())), z).expect("instrument shape");
    let groups = spec.groups.map(|g| (0..n).map(|i| T::from_count(i % g)).collect());
    let data = Dataset::from_parts(
        spec.schema(),
        y.into_iter().map(T::lit).collect(),
        t.into_iter().map(T::lit).collect(),
        cast(&x),
        cast(&wp),
        cast(&wn),
        cast(&z),
        groups,
    )?;
    Ok((data, truth))
}

/// Accuracy of a set of estimates against the true effect.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub bias: f64,
    /// Share of intervals containing the truth; `None` when no estimate
    /// carries an interval.
    pub coverage: Option<f64>,
}

pub fn score<T: Real>(estimates: &[EffectEstimate<T>], truth: impl Fn(&[f64]) -> f64) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(Error::Size("cannot score an empty estimate list".into()));
    }
    let m = estimates.len() as f64;
    let (mut se, mut err, mut covered, mut with_ci) = (0.0, 0.0, 0usize, 0usize);
    for e in estimates {
        let x: Vec<f64> = e.x.iter().map(|v| v.as_f64()).collect();
        let target = truth(&x);
        let diff = e.theta.as_f64() - target;
        se += diff * diff;
        err += diff;
        if let (Some(lo), Some(hi)) = (e.ci_low, e.ci_high) {
            with_ci += 1;
            if lo.as_f64() <= target && target <= hi.as_f64() {
                covered += 1;
            }
        }
    }
    Ok(Metrics {
        rmse: (se / m).sqrt(),
        bias: err / m,
        coverage: (with_ci > 0).then(|| covered as f64 / with_ci as f64),
    })
}

/// Preset data-generating processes.
pub mod scenarios {
    use super::*;

    pub const NAMES: [&str; 5] = ["homogeneous", "step", "sinusoid", "nonlinear", "confounded_iv"];

    /// Constant effect 1.5 with sparse linear confounding through
    /// `support` of `p` controls.
    pub fn homogeneous(n: usize, p: usize, support: usize, seed: u64) -> DgpSpec {
        let k = support.min(p);
        DgpSpec {
            n,
            p_nonparametric: p,
            theta: ThetaSpec::Constant { value: 1.5 },
            treatment_terms: (0..k).map(|j| Term::linear(Block::Wn, j, 1.0 / (j + 1) as f64)).collect(),
            outcome_terms: (0..k).map(|j| Term::linear(Block::Wn, j, 0.8 - 0.3 * j as f64)).collect(),
            seed,
            ..DgpSpec::default()
        }
    }

    /// `theta0(x) = sign(x)` with mild linear confounding.
    pub fn step(n: usize, p: usize, seed: u64) -> DgpSpec {
        let k = p.min(2);
        DgpSpec {
            n,
            p_nonparametric: p,
            theta: ThetaSpec::Step { low: -1.0, high: 1.0, at: 0.0, feature: 0 },
            treatment_terms: (0..k).map(|j| Term::linear(Block::Wn, j, 0.5)).collect(),
            outcome_terms: (0..k).map(|j| Term::linear(Block::Wn, j, 0.5)).collect(),
            seed,
            ..DgpSpec::default()
        }
    }

    pub fn sinusoid(n: usize, p: usize, seed: u64) -> DgpSpec {
        DgpSpec { theta: ThetaSpec::Sinusoid { amplitude: 1.0, frequency: 1.0, feature: 0 }, ..step(n, p, seed) }
    }

    /// One-hot parametric controls entering linearly plus strongly
    /// nonlinear nonparametric confounding.
    pub fn nonlinear(n: usize, seed: u64) -> DgpSpec {
        let (wn, wp) = (Block::Wn, Block::Wp);
        let fixed = |coefs: &[f64]| coefs.iter().enumerate().map(|(j, &c)| Term::linear(wp, j, c)).collect::<Vec<_>>();
        let mut treatment_terms = fixed(&[0.5, -0.5, 1.0, 0.0]);
        treatment_terms.extend([
            Term::shaped(wn, 0, 1.5, Shape::Sin),
            Term::shaped(wn, 1, 0.8, Shape::Square),
            Term::product((wn, 0), (wn, 2), 1.0),
            Term::shaped(Block::X, 0, 1.0, Shape::Abs),
        ]);
        let mut outcome_terms = fixed(&[1.0, 0.0, -1.0, 0.5]);
        outcome_terms.extend([
            Term::shaped(wn, 1, 2.0, Shape::Tanh),
            Term::shaped(wn, 2, 1.0, Shape::Square),
            Term::product((wn, 0), (wn, 1), 1.5),
            Term::shaped(wn, 0, 1.0, Shape::Abs),
        ]);
        DgpSpec {
            n,
            p_parametric: 4,
            p_nonparametric: 3,
            theta: ThetaSpec::Affine { intercept: -0.5, slope: 0.3, feature: 0 },
            treatment_terms,
            outcome_terms,
            sigma_eps: 0.5,
            sigma_eta: 0.5,
            parametric: ParametricKind::OneHot,
            seed,
            ..DgpSpec::default()
        }
    }

    /// Constant effect 1 with a hidden confounder and a valid instrument.
    /// The partialling-out bias is `c_t c_y / (pi^2 + c_t^2 + sigma_eta^2)`
    /// = 0.5 for the values below.
    pub fn confounded_iv(n: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            n,
            p_nonparametric: 3,
            theta: ThetaSpec::Constant { value: 1.0 },
            treatment_terms: vec![Term::linear(Block::Wn, 0, 1.0), Term::linear(Block::Wn, 1, -0.5)],
            outcome_terms: vec![Term::linear(Block::Wn, 0, 0.5), Term::linear(Block::Wn, 2, 1.0)],
            sigma_eta: 0.5,
            instrument: Some(1.0),
            confounder: Some(Confounder { treatment: 1.0, outcome: 1.125 }),
            seed,
            ..DgpSpec::default()
        }
    }

    /// Preset by name with `n` rows.
    pub fn by_name(name: &str, n: usize, seed: u64) -> Result<DgpSpec> {
        Ok(match name {
            "homogeneous" => homogeneous(n, 10, 3, seed),
            "step" => step(n, 2, seed),
            "sinusoid" => sinusoid(n, 2, seed),
            "nonlinear" => nonlinear(n, seed),
            "confounded_iv" => confounded_iv(n, seed),
            other => {
                return Err(Error::Config(format!("unknown scenario `{other}`; known: {}", NAMES.join(", "))))
            }
        })
    }
}

//! Cross-fitted average-effect estimators: partialling-out DML, its
//! instrumental-variable variant, and the first-stage F statistic.

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, with_intercept};
use crate::nuisance::{covariate_matrix, r_squared, NuisanceLearner, Target};
use crate::rng;
use crate::scalar::Real;

/// A random partition of `0..n` into `k` folds whose sizes differ by at
/// most one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossFitPlan {
    pub k: usize,
    pub folds: Vec<usize>,
    pub seed: u64,
}

impl CrossFitPlan {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("cross-fitting needs k >= 2, got {k}")));
        }
        if k * 10 > n {
            return Err(Error::Config(format!("k = {k} folds exceeds n / 10 for n = {n}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, "cross-fit", 0));
        let mut folds = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            folds[i] = pos % k;
        }
        Ok(Self { k, folds, seed })
    }

    /// Plan from an explicit label vector; labels must cover `0..k`.
    pub fn from_labels(folds: Vec<usize>, seed: u64) -> Result<Self> {
        let k = folds.iter().copied().max().map_or(0, |m| m + 1);
        if k < 2 || (0..k).any(|f| !folds.contains(&f)) {
            return Err(Error::Config("fold labels must cover 0..k with k >= 2".into()));
        }
        Ok(Self { k, folds, seed })
    }

    pub fn n(&self) -> usize {
        self.folds.len()
    }

    pub fn fold(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.n()).partition(|&i| self.folds[i] == f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FoldDiagnostics<T: Real> {
    pub fold: usize,
    pub size: usize,
    /// Out-of-fold R^2 of the outcome, treatment and instrument models.
    pub outcome_r2: T,
    pub treatment_r2: T,
    pub instrument_r2: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AteEstimate<T: Real> {
    pub theta: T,
    pub std_error: T,
    pub ci_low: T,
    pub ci_high: T,
    pub level: f64,
    pub folds: Vec<FoldDiagnostics<T>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IvOptions {
    /// Instrument column to use when there are several.
    pub instrument: Option<usize>,
    /// Combine all instruments into one by projecting `T~` on the `Z~`
    /// columns.
    pub combine: bool,
}

/// Cross-fitted residuals, aligned with the dataset rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals<T> {
    pub outcome: Vec<T>,
    pub treatment: Vec<T>,
    pub instruments: Vec<Vec<T>>,
}

fn interval<T: Real>(theta: T, se: T, level: f64) -> Result<(T, T)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = T::lit(z) * se;
    Ok((theta - half, theta + half))
}

/// Partialling-out estimate from given residuals, with the sandwich
/// standard error `sqrt(sum psi^2) / sum T~^2`, `psi = (Y~ - theta T~) T~`.
pub fn dml_from_residuals<T: Real>(ry: &[T], rt: &[T], level: f64) -> Result<AteEstimate<T>> {
    let stt: T = rt.iter().map(|&t| t * t).sum();
    let sty: T = ry.iter().zip(rt).map(|(&y, &t)| y * t).sum();
    if stt <= T::lit(crate::forest::moments::MIN_TREATMENT_VARIATION) {
        return Err(Error::NoTreatmentVariation { sum_sq: stt.as_f64() });
    }
    let theta = sty / stt;
    let meat: T = ry.iter().zip(rt).map(|(&y, &t)| ((y - theta * t) * t).powi(2)).sum();
    let std_error = meat.sqrt() / stt;
    let (ci_low, ci_high) = interval(theta, std_error, level)?;
    Ok(AteEstimate { theta, std_error, ci_low, ci_high, level, folds: Vec::new() })
}

/// Ratio estimate `sum Y~ Z~ / sum T~ Z~` with delta-method standard error
/// `sqrt(sum psi^2) / |sum T~ Z~|`, `psi = (Y~ - theta T~) Z~`.
pub fn dmliv_from_residuals<T: Real>(ry: &[T], rt: &[T], rz: &[T], level: f64) -> Result<AteEstimate<T>> {
    let stz: T = rt.iter().zip(rz).map(|(&t, &z)| t * z).sum();
    let syz: T = ry.iter().zip(rz).map(|(&y, &z)| y * z).sum();
    let stt: T = rt.iter().map(|&t| t * t).sum();
    let szz: T = rz.iter().map(|&z| z * z).sum();
    let scale = (stt * szz).sqrt();
    if stz.abs() <= T::lit(1e-10) * scale || scale == T::zero() {
        return Err(Error::WeakInstrument { value: stz.abs().as_f64(), scale: scale.as_f64() });
    }
    let theta = syz / stz;
    let meat: T = ry.iter().zip(rt).zip(rz).map(|((&y, &t), &z)| ((y - theta * t) * z).powi(2)).sum();
    let std_error = meat.sqrt() / stz.abs();
    let (ci_low, ci_high) = interval(theta, std_error, level)?;
    Ok(AteEstimate { theta, std_error, ci_low, ci_high, level, folds: Vec::new() })
}

/// Out-of-fold residuals of `Y`, `T` and the listed instrument columns.
pub fn cross_fit_residuals<T: Real>(
    data: &Dataset<T>,
    learner: &dyn NuisanceLearner<T>,
    plan: &CrossFitPlan,
    instruments: &[usize],
) -> Result<(Residuals<T>, Vec<FoldDiagnostics<T>>)> {
    let n = data.n();
    if plan.n() != n {
        return Err(Error::Shape(format!("plan covers {} rows, dataset has {n}", plan.n())));
    }
    let q = data.dims().q;
    if let Some(&j) = instruments.iter().find(|&&j| j >= q) {
        return Err(Error::Config(format!("instrument {j} out of range for {q} instrument columns")));
    }
    let per_fold = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let (held, train) = plan.fold(f);
            let seed = rng::derive_seed(plan.seed, "fold", f as u64);
            let mut targets = vec![Target::Outcome, Target::Treatment];
            targets.extend(instruments.iter().map(|&j| Target::Instrument(j)));
            let mut columns = Vec::with_capacity(targets.len());
            let mut r2 = Vec::with_capacity(targets.len());
            for target in targets {
                let model = learner.fit(data, &train, None, target, seed)?;
                let (truth, pred): (Vec<T>, Vec<T>) = held
                    .iter()
                    .map(|&i| {
                        let row = data.row(i);
                        (target.value(&row), model.predict(&row))
                    })
                    .unzip();
                r2.push(r_squared(&truth, &pred));
                columns.push(truth.iter().zip(&pred).map(|(a, b)| *a - *b).collect::<Vec<T>>());
            }
            let diag = FoldDiagnostics {
                fold: f,
                size: held.len(),
                outcome_r2: r2[0],
                treatment_r2: r2[1],
                instrument_r2: r2.get(2).copied(),
            };
            Ok((held, columns, diag))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut res = Residuals {
        outcome: vec![T::zero(); n],
        treatment: vec![T::zero(); n],
        instruments: vec![vec![T::zero(); n]; instruments.len()],
    };
    let mut diags = Vec::with_capacity(plan.k);
    for (held, columns, diag) in per_fold {
        for (k, &i) in held.iter().enumerate() {
            res.outcome[i] = columns[0][k];
            res.treatment[i] = columns[1][k];
            for (j, col) in columns[2..].iter().enumerate() {
                res.instruments[j][i] = col[k];
            }
        }
        diags.push(diag);
    }
    Ok((res, diags))
}

pub fn fit_dml<T: Real>(
    data: &Dataset<T>,
    learner: &dyn NuisanceLearner<T>,
    plan: &CrossFitPlan,
    level: f64,
) -> Result<AteEstimate<T>> {
    let (res, folds) = cross_fit_residuals(data, learner, plan, &[])?;
    let mut est = dml_from_residuals(&res.outcome, &res.treatment, level)?;
    est.folds = folds;
    Ok(est)
}

pub fn fit_dmliv<T: Real>(
    data: &Dataset<T>,
    learner: &dyn NuisanceLearner<T>,
    plan: &CrossFitPlan,
    options: &IvOptions,
    level: f64,
) -> Result<AteEstimate<T>> {
    let q = data.dims().q;
    let columns: Vec<usize> = match (options.instrument, options.combine) {
        (Some(j), false) => vec![j],
        (None, false) if q == 1 => vec![0],
        (None, false) => {
            return Err(Error::Config(format!(
                "{q} instrument columns: select one or enable combining"
            )))
        }
        (_, true) => (0..q).collect(),
    };
    if columns.is_empty() {
        return Err(Error::Config("dataset has no instrument column".into()));
    }
    let (res, folds) = cross_fit_residuals(data, learner, plan, &columns)?;
    let rz = if res.instruments.len() == 1 {
        res.instruments[0].clone()
    } else {
        combine_instruments(&res.treatment, &res.instruments)?
    };
    let mut est = dmliv_from_residuals(&res.outcome, &res.treatment, &rz, level)?;
    est.folds = folds;
    Ok(est)
}

/// Fitted values of `T~` regressed on the `Z~` columns.
pub fn combine_instruments<T: Real>(rt: &[T], rz: &[Vec<T>]) -> Result<Vec<T>> {
    let n = rt.len();
    let z = Array2::from_shape_fn((n, rz.len()), |(i, j)| rz[j][i]);
    let fit = least_squares(z.view(), rt)?;
    Ok(z.dot(&fit.coefficients).to_vec())
}

/// F statistic for the joint significance of the instrument columns in the
/// regression of `T` on an intercept, the instruments and the covariates
/// `(x, wp, wn)`. Returns `+inf` when the unrestricted fit is exact.
pub fn first_stage_f<T: Real>(data: &Dataset<T>, instruments: &[usize]) -> Result<T> {
    let q = instruments.len();
    if q == 0 {
        return Err(Error::Config("first-stage F needs at least one instrument".into()));
    }
    let dims = data.dims();
    if let Some(&j) = instruments.iter().find(|&&j| j >= dims.q) {
        return Err(Error::Config(format!("instrument {j} out of range for {} columns", dims.q)));
    }
    let n = data.n();
    let rows: Vec<usize> = (0..n).collect();
    let controls = with_intercept(covariate_matrix(data, &rows).view());
    let z = data.z().select(Axis(1), instruments);
    let full = concatenate(Axis(1), &[z.view(), controls.view()]).expect("row counts agree");
    let k_u = full.ncols();
    if n <= k_u {
        return Err(Error::Rank(format!("{k_u} regressors with only {n} rows")));
    }
    let unrestricted = least_squares(full.view(), data.t())?;
    let restricted = least_squares(controls.view(), data.t())?;
    let (rss_u, rss_r) = (unrestricted.rss, restricted.rss);
    if rss_u <= T::lit(1e-12) * rss_r || rss_u == T::zero() {
        return Ok(T::infinity());
    }
    let num = (rss_r - rss_u).max(T::zero()) / T::from_count(q);
    let den = rss_u / T::from_count(n - k_u);
    Ok(num / den)
}

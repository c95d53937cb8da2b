//! Weighted lasso by cyclic coordinate descent on the weighted Gram matrix.
//!
//! Features are centered and scaled internally; the per-coordinate penalty
//! is rescaled so the minimized objective is exactly
//! `sum_i w_i (y_i - b0 - x_i.b)^2 + lambda * ||b||_1` in original units.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinearModel<T: Real> {
    pub coefficients: Vec<T>,
    pub intercept: T,
    pub lambda: T,
    pub sweeps: usize,
}

impl<T: Real> LinearModel<T> {
    pub fn predict(&self, features: &[T]) -> T {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(features)
                .map(|(b, x)| *b * *x)
                .sum::<T>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { max_sweeps: 1_000, tolerance: 1e-8 }
    }
}

pub(crate) fn check_weights<T: Real>(weights: &[T]) -> Result<T> {
    let mut total = T::zero();
    for &w in weights {
        if !w.is_finite() || w < T::zero() {
            return Err(Error::Weight("weights must be finite and non-negative".into()));
        }
        total += w;
    }
    if total <= T::zero() {
        return Err(Error::Weight("all weights are zero".into()));
    }
    Ok(total)
}

pub fn fit_weighted_lasso<T: Real>(
    features: ArrayView2<'_, T>,
    targets: &[T],
    weights: &[T],
    lambda: T,
) -> Result<LinearModel<T>> {
    fit_weighted_lasso_with(features, targets, weights, lambda, LassoOptions::default(), None)
}

/// As [`fit_weighted_lasso`]; when `trace` is given the objective value is
/// pushed after every sweep.
pub fn fit_weighted_lasso_with<T: Real>(
    features: ArrayView2<'_, T>,
    targets: &[T],
    weights: &[T],
    lambda: T,
    opts: LassoOptions,
    mut trace: Option<&mut Vec<T>>,
) -> Result<LinearModel<T>> {
    let (n, p) = features.dim();
    if targets.len() != n || weights.len() != n {
        return Err(Error::Shape(format!(
            "{n} feature rows, {} targets, {} weights",
            targets.len(),
            weights.len()
        )));
    }
    if lambda.is_nan() || lambda < T::zero() {
        return Err(Error::Config("lasso penalty must be non-negative".into()));
    }
    let total = check_weights(weights)?;
    let support: Vec<usize> = (0..n).filter(|&i| weights[i] > T::zero()).collect();

    let mut mean = vec![T::zero(); p];
    let mut ybar = T::zero();
    for &i in &support {
        let w = weights[i];
        ybar += w * targets[i];
        for (m, &x) in mean.iter_mut().zip(features.row(i).iter()) {
            *m += w * x;
        }
    }
    ybar /= total;
    mean.iter_mut().for_each(|m| *m /= total);

    let mut scale = vec![T::zero(); p];
    for &i in &support {
        let w = weights[i];
        for (j, &x) in features.row(i).iter().enumerate() {
            let c = x - mean[j];
            scale[j] += w * c * c;
        }
    }
    let floor = T::epsilon() * T::lit(16.0);
    let active: Vec<usize> = (0..p)
        .filter(|&j| {
            scale[j] = (scale[j] / total).sqrt();
            scale[j] > floor * (T::one() + mean[j].abs())
        })
        .collect();
    let k = active.len();

    // Gram and cross products over standardized active columns
    let mut gram = vec![T::zero(); k * k];
    let mut cross = vec![T::zero(); k];
    let mut yy = T::zero();
    let mut z = vec![T::zero(); k];
    for &i in &support {
        let w = weights[i];
        let row = features.row(i);
        for (a, &j) in active.iter().enumerate() {
            z[a] = (row[j] - mean[j]) / scale[j];
        }
        let yc = targets[i] - ybar;
        yy += w * yc * yc;
        for a in 0..k {
            let wz = w * z[a];
            cross[a] += wz * yc;
            for b in a..k {
                gram[a * k + b] += wz * z[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[a * k + b] = gram[b * k + a];
        }
    }

    let half_pen: Vec<T> = active.iter().map(|&j| lambda / (T::lit(2.0) * scale[j])).collect();
    let mut coef = vec![T::zero(); k];
    // grad[a] = cross[a] - sum_b gram[a,b] coef[b]
    let mut grad = cross.clone();
    let tol = T::lit(opts.tolerance);
    let objective = |coef: &[T], grad: &[T]| -> T {
        // sum w r^2 = yy - 2 c.b + b'Gb = yy - c.b - b.(c - Gb)
        let mut v = yy;
        for a in 0..k {
            v -= coef[a] * (cross[a] + grad[a]);
            v += T::lit(2.0) * half_pen[a] * coef[a].abs();
        }
        v
    };

    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change = T::zero();
        for a in 0..k {
            let g = gram[a * k + a];
            let rho = grad[a] + g * coef[a];
            let new = soft_threshold(rho, half_pen[a]) / g;
            let delta = new - coef[a];
            if delta != T::zero() {
                coef[a] = new;
                for b in 0..k {
                    grad[b] -= gram[b * k + a] * delta;
                }
                max_change = max_change.max(delta.abs() / scale[active[a]]);
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective(&coef, &grad));
        }
        if max_change < tol {
            break;
        }
    }

    let mut coefficients = vec![T::zero(); p];
    for (a, &j) in active.iter().enumerate() {
        coefficients[j] = coef[a] / scale[j];
    }
    let intercept = ybar - coefficients.iter().zip(&mean).map(|(b, m)| *b * *m).sum::<T>();
    Ok(LinearModel { coefficients, intercept, lambda, sweeps })
}

#[inline]
pub fn soft_threshold<T: Real>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

/// Value of the weighted lasso objective in original units.
pub fn lasso_objective<T: Real>(
    features: ArrayView2<'_, T>,
    targets: &[T],
    weights: &[T],
    lambda: T,
    model: &LinearModel<T>,
) -> T {
    let fit: T = features
        .rows()
        .into_iter()
        .zip(targets)
        .zip(weights)
        .map(|((row, y), w)| {
            let r = *y - model.predict(row.as_slice().expect("standard layout"));
            *w * r * r
        })
        .sum();
    fit + lambda * model.coefficients.iter().map(|b| b.abs()).sum::<T>()
}

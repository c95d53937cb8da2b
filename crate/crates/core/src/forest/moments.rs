//! Closed-form pieces of the residual-on-residual moment.
//!
//! Everything here only needs field arithmetic, so the same code runs on
//! floats and on exact rationals.

use crate::error::{Error, Result};
use crate::scalar::Field;

/// Threshold below which a sum of squared treatment residuals counts as
/// no variation.
pub const MIN_TREATMENT_VARIATION: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeFit<F> {
    /// `argmin_theta sum 1/2 (theta T~ - Y~)^2`
    pub theta: F,
    /// Empirical Hessian, negative: `-sum T~^2 / n`.
    pub hessian: F,
}

pub fn fit_node_theta<F: Field>(resid_y: &[F], resid_t: &[F]) -> Result<NodeFit<F>> {
    assert_eq!(resid_y.len(), resid_t.len(), "residual vectors differ in length");
    let mut stt = F::zero();
    let mut sty = F::zero();
    for (&y, &t) in resid_y.iter().zip(resid_t) {
        stt += t * t;
        sty += t * y;
    }
    if stt <= F::from_f64_approx(MIN_TREATMENT_VARIATION) {
        return Err(Error::NoTreatmentVariation { sum_sq: stt.to_f64_approx() });
    }
    let n = F::from_count(resid_t.len());
    Ok(NodeFit { theta: sty / stt, hessian: F::zero() - stt / n })
}

/// Gradient of the residual loss at `theta` for one observation,
/// `(Y~ - theta T~) T~`.
#[inline]
pub fn influence<F: Field>(theta: F, resid_y: F, resid_t: F) -> F {
    (resid_y - theta * resid_t) * resid_t
}

/// Newton step from the parent given the summed child influence.
#[inline]
pub fn newton_step<F: Field>(theta: F, hessian: F, influence_sum: F) -> F {
    theta - influence_sum / hessian
}

/// Proxy child estimate `theta_P - sum_{i in C} A_P^{-1} (Y~_i - theta_P T~_i) T~_i`.
pub fn newton_proxy<F: Field>(theta: F, hessian: F, resid_y: &[F], resid_t: &[F]) -> Result<F> {
    if hessian == F::zero() {
        return Err(Error::DegenerateHessian);
    }
    let mut sum = F::zero();
    for (&y, &t) in resid_y.iter().zip(resid_t) {
        sum += influence(theta, y, t);
    }
    Ok(newton_step(theta, hessian, sum))
}

/// `sum_j (theta~_{C_j} - theta_P)^2 / |C_j|`.
pub fn heterogeneity_score<F: Field>(proxy_left: F, proxy_right: F, theta: F, n_left: usize, n_right: usize) -> F {
    let dl = proxy_left - theta;
    let dr = proxy_right - theta;
    dl * dl / F::from_count(n_left) + dr * dr / F::from_count(n_right)
}

/// Weighted residual regression `argmin sum a_i (theta T~_i - Y~_i)^2`.
pub fn kernel_theta<F: Field>(weights: &[F], resid_y: &[F], resid_t: &[F]) -> Result<F> {
    assert!(weights.len() == resid_y.len() && resid_y.len() == resid_t.len());
    let mut att = F::zero();
    let mut aty = F::zero();
    for ((&a, &y), &t) in weights.iter().zip(resid_y).zip(resid_t) {
        att += a * t * t;
        aty += a * t * y;
    }
    if att <= F::from_f64_approx(MIN_TREATMENT_VARIATION) {
        return Err(Error::NoTreatmentVariation { sum_sq: att.to_f64_approx() });
    }
    Ok(aty / att)
}

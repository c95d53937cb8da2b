//! Revenue of a price held over a window of days and its maximizer.
//!
//! With `Y = beta_d T + (q - beta_d g)` as the per-day demand, revenue over
//! the window is `Pi(T) = sum_d [(q_d - beta_d g_d) T + beta_d T^2]`, a
//! quadratic that is concave whenever `sum_d beta_d < 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Field;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyInputs<F> {
    /// Slope `beta_d` for each day in the window.
    pub slopes: Vec<F>,
    /// Fitted outcome level `q_d`; one entry, or one per day.
    pub outcome_level: Vec<F>,
    /// Fitted treatment level `g_d`; one entry, or one per day.
    pub treatment_level: Vec<F>,
    pub lower: F,
    pub upper: F,
}

impl<F: Field> PolicyInputs<F> {
    /// Inputs with levels held fixed across the window.
    pub fn constant_levels(slopes: Vec<F>, q: F, g: F, lower: F, upper: F) -> Self {
        Self { slopes, outcome_level: vec![q], treatment_level: vec![g], lower, upper }
    }

    pub fn validate(&self) -> Result<()> {
        let days = self.slopes.len();
        if days == 0 {
            return Err(Error::Config("policy window has no days".into()));
        }
        for (name, v) in [("outcome_level", &self.outcome_level), ("treatment_level", &self.treatment_level)] {
            if v.len() != 1 && v.len() != days {
                return Err(Error::Shape(format!("{name} has {} entries for {days} days", v.len())));
            }
        }
        if self.lower > self.upper {
            return Err(Error::Config("policy bounds must satisfy lower <= upper".into()));
        }
        Ok(())
    }

    fn level(v: &[F], d: usize) -> F {
        if v.len() == 1 {
            v[0]
        } else {
            v[d]
        }
    }

    /// `(sum_d (q_d - beta_d g_d), sum_d beta_d)`, the linear and quadratic
    /// coefficients of revenue.
    pub fn coefficients(&self) -> (F, F) {
        let mut linear = F::zero();
        let mut quadratic = F::zero();
        for (d, &b) in self.slopes.iter().enumerate() {
            linear += Self::level(&self.outcome_level, d) - b * Self::level(&self.treatment_level, d);
            quadratic += b;
        }
        (linear, quadratic)
    }
}

pub fn revenue<F: Field>(price: F, inputs: &PolicyInputs<F>) -> F {
    let (a, b) = inputs.coefficients();
    a * price + b * price * price
}

/// Maximizer of revenue over `[lower, upper]`: the vertex
/// `-sum(q - beta g) / (2 sum beta)` clamped to the bounds.
pub fn optimal_price<F: Field>(inputs: &PolicyInputs<F>) -> Result<F> {
    inputs.validate()?;
    let (a, b) = inputs.coefficients();
    if b >= F::zero() {
        return Err(Error::NonConcave { sum_beta: b.to_f64_approx() });
    }
    let vertex = F::zero() - a / ((F::one() + F::one()) * b);
    Ok(if vertex < inputs.lower {
        inputs.lower
    } else if vertex > inputs.upper {
        inputs.upper
    } else {
        vertex
    })
}

/// Best revenue on the grid `lower, lower + step, ...` plus `upper`; ties
/// keep the lowest price.
pub fn grid_search_price<F: Field>(inputs: &PolicyInputs<F>, step: F) -> Result<F> {
    inputs.validate()?;
    if step <= F::zero() {
        return Err(Error::Config("grid step must be positive".into()));
    }
    let mut best = inputs.lower;
    let mut best_value = revenue(best, inputs);
    let mut p = inputs.lower + step;
    loop {
        let at = if p > inputs.upper { inputs.upper } else { p };
        let v = revenue(at, inputs);
        if v > best_value {
            best = at;
            best_value = v;
        }
        if p >= inputs.upper {
            break;
        }
        p += step;
    }
    Ok(best)
}

/// `(price, revenue)` at `points` evenly spaced prices across the bounds.
pub fn revenue_curve<F: Field>(inputs: &PolicyInputs<F>, points: usize) -> Result<Vec<(F, F)>> {
    inputs.validate()?;
    if points < 2 {
        return Err(Error::Config("revenue curve needs at least 2 points".into()));
    }
    let span = inputs.upper - inputs.lower;
    let last = F::from_count(points - 1);
    Ok((0..points)
        .map(|k| {
            let p = inputs.lower + span * F::from_count(k) / last;
            (p, revenue(p, inputs))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn q(v: i64) -> Q {
        Q::from_integer(v)
    }

    #[test]
    fn one_day_parabola() {
        let inputs = PolicyInputs::constant_levels(vec![q(-1)], q(10), q(0), q(0), q(10));
        assert_eq!(revenue(q(5), &inputs), q(25));
        assert_eq!(optimal_price(&inputs).unwrap(), q(5));
    }

    #[test]
    fn two_days_per_day_levels() {
        let inputs = PolicyInputs {
            slopes: vec![q(-1), q(-1)],
            outcome_level: vec![q(10), q(6)],
            treatment_level: vec![q(0)],
            lower: q(0),
            upper: q(10),
        };
        assert_eq!(revenue(q(4), &inputs), q(32));
        assert_eq!(optimal_price(&inputs).unwrap(), q(4));
    }

    #[test]
    fn convex_rejected_and_grid_hits_boundary() {
        let inputs = PolicyInputs::constant_levels(vec![1.0], 1.0, 0.0, 2.0, 3.0);
        assert!(matches!(optimal_price(&inputs), Err(Error::NonConcave { .. })));
        assert_eq!(grid_search_price(&inputs, 0.01).unwrap(), 3.0);
    }

    #[test]
    fn zero_slope_is_linear() {
        let inputs = PolicyInputs::constant_levels(vec![0.0, 0.0, 0.0], 2.0, 5.0, 0.0, 1.0);
        assert_eq!(revenue(0.5, &inputs), 3.0);
    }

    #[test]
    fn clamps_to_bounds() {
        let inputs = PolicyInputs::constant_levels(vec![-1.0], 10.0, 0.0, 6.0, 9.0);
        assert_eq!(optimal_price(&inputs).unwrap(), 6.0);
    }
}

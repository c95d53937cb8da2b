use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use super::lasso::check_weights;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Draws `ceil(factor * rows.len())` rows i.i.d. with probability
/// proportional to `weights`.
pub fn resample_by_weights<T: Real>(rows: &[usize], weights: &[T], factor: f64, seed: u64) -> Result<Vec<usize>> {
    if rows.len() != weights.len() {
        return Err(Error::Shape(format!("{} rows, {} weights", rows.len(), weights.len())));
    }
    if factor.is_nan() || factor < 1.0 {
        return Err(Error::Config(format!("resampling factor {factor} must be >= 1")));
    }
    check_weights(weights)?;
    let w: Vec<f64> = weights.iter().map(|v| v.as_f64()).collect();
    let dist = WeightedIndex::new(&w).map_err(|e| Error::Weight(e.to_string()))?;
    let draws = (factor * rows.len() as f64).ceil() as usize;
    let mut r = rng::stream(seed, "resample-by-weights", 0);
    Ok((0..draws).map(|_| rows[dist.sample(&mut r)]).collect())
}

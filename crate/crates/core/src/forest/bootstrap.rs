use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_orf_with, EffectEstimate, ForestConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::NuisanceLearner;
use crate::rng;
use crate::scalar::Real;

pub const MIN_REPLICATES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    /// Resample whole groups from the dataset's group column instead of rows.
    pub cluster: bool,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { replicates: 100, level: 0.95, cluster: false, seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::Config(format!(
                "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("bootstrap level {} outside (0, 1)", self.level)));
        }
        Ok(())
    }
}

/// Sample quantile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn resample_rows<T: Real>(data: &Dataset<T>, cluster: bool, seed: u64) -> Result<Vec<usize>> {
    let n = data.n();
    let mut r = rng::stream(seed, "bootstrap-rows", 0);
    if !cluster {
        return Ok((0..n).map(|_| r.random_range(0..n)).collect());
    }
    let groups = data
        .groups()
        .ok_or_else(|| Error::Config("cluster bootstrap needs a group column".into()))?;
    let mut members: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.as_f64().to_bits()).or_default().push(i);
    }
    let clusters: Vec<Vec<usize>> = members.into_values().collect();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..clusters.len() {
        rows.extend_from_slice(&clusters[r.random_range(0..clusters.len())]);
    }
    Ok(rows)
}

/// Replicate estimates: one row per successful replicate, one column per
/// point. Replicates that fail or produce non-finite values are dropped.
pub fn bootstrap_replicates<T: Real>(
    data: &Dataset<T>,
    cfg: &ForestConfig,
    node_learner: &dyn NuisanceLearner<T>,
    final_learner: &dyn NuisanceLearner<T>,
    points: &[Vec<T>],
    boot: &BootstrapConfig,
) -> Result<Vec<Vec<f64>>> {
    boot.validate()?;
    let draws: Vec<Option<Vec<f64>>> = (0..boot.replicates)
        .into_par_iter()
        .map(|b| {
            let seed = rng::derive_seed(boot.seed, "bootstrap", b as u64);
            let replicate = (|| {
                let rows = resample_rows(data, boot.cluster, seed)?;
                let resampled = data.select(&rows);
                let rcfg = ForestConfig { seed: rng::derive_seed(seed, "forest", 0), ..cfg.clone() };
                let m = fit_orf_with(&resampled, &rcfg, node_learner)?;
                points
                    .iter()
                    .map(|x| m.estimate_effect(&resampled, final_learner, x).map(|e| e.theta.as_f64()))
                    .collect::<Result<Vec<f64>>>()
            })();
            replicate.ok().filter(|v| v.iter().all(|t| t.is_finite()))
        })
        .collect();
    let ok: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    if ok.len() < MIN_REPLICATES {
        return Err(Error::Config(format!(
            "only {} of {} bootstrap replicates succeeded",
            ok.len(),
            boot.replicates
        )));
    }
    Ok(ok)
}

/// Percentile interval at `level` from replicate values, widened if needed
/// to contain the point estimate `theta`.
pub fn replicate_interval(theta: f64, replicates: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let low = percentile(&sorted, alpha / 2.0);
    let high = percentile(&sorted, 1.0 - alpha / 2.0);
    (low.min(theta), high.max(theta))
}

/// Full-sample estimates at `points` with intervals from
/// `boot.replicates` refits on resampled data.
pub fn bootstrap_ci<T: Real>(
    data: &Dataset<T>,
    cfg: &ForestConfig,
    node_learner: &dyn NuisanceLearner<T>,
    final_learner: &dyn NuisanceLearner<T>,
    points: &[Vec<T>],
    boot: &BootstrapConfig,
) -> Result<Vec<EffectEstimate<T>>> {
    boot.validate()?;
    let model = fit_orf_with(data, cfg, node_learner)?;
    let mut estimates = model.estimate_effects(data, final_learner, points)?;
    let draws = bootstrap_replicates(data, cfg, node_learner, final_learner, points, boot)?;
    for (k, est) in estimates.iter_mut().enumerate() {
        let column: Vec<f64> = draws.iter().map(|v| v[k]).collect();
        let (low, high) = replicate_interval(est.theta.as_f64(), &column, boot.level);
        est.ci_low = Some(T::lit(low));
        est.ci_high = Some(T::lit(high));
    }
    Ok(estimates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&v, 0.025) - 3.475).abs() < 1e-12);
        assert!((percentile(&v, 0.975) - 97.525).abs() < 1e-12);
        assert_eq!(percentile(&[4.0], 0.3), 4.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
    }

    #[test]
    fn interval_contains_point_estimate() {
        let reps: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let (lo, hi) = replicate_interval(0.5, &reps, 0.9);
        assert!((lo - 0.05).abs() < 1e-12 && (hi - 0.95).abs() < 1e-12);
        assert_eq!(replicate_interval(0.99, &reps, 0.9).1, 0.99);
    }

    #[test]
    fn rejects_small_replicate_counts() {
        let cfg = BootstrapConfig { replicates: 19, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = BootstrapConfig { level: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}

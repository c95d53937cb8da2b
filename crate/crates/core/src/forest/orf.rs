use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::moments::kernel_theta;
use super::{forest_weights, grow_forest, ForestConfig, KernelForest};
use crate::data::{split_halves, Dataset, IndexSplit};
use crate::error::{Error, Result};
use crate::nuisance::{fit_nuisance_pair, NuisanceLearner};
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EffectEstimate<T: Real> {
    pub x: Vec<T>,
    pub theta: T,
    pub ci_low: Option<T>,
    pub ci_high: Option<T>,
    /// `1 / sum a_i^2` over the target-forest weights.
    pub n_effective: T,
}

/// A fitted two-stage forest. Holds only indices and trees, so estimation
/// needs the training dataset passed back in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OrfModel<T: Real> {
    pub config: ForestConfig,
    /// `first` feeds the nuisance forest, `second` the target forest.
    pub halves: IndexSplit,
    pub nuisance_forest: KernelForest<T>,
    pub target_forest: KernelForest<T>,
    pub fingerprint: u64,
    pub n: usize,
}

/// Fits both forests using the node learner named in `cfg`.
pub fn fit_orf<T: Real>(data: &Dataset<T>, cfg: &ForestConfig) -> Result<OrfModel<T>> {
    let learner = cfg.node_learner.clone();
    fit_orf_with(data, cfg, &learner)
}

/// As [`fit_orf`] with an explicit node-level learner.
pub fn fit_orf_with<T: Real>(
    data: &Dataset<T>,
    cfg: &ForestConfig,
    node_learner: &dyn NuisanceLearner<T>,
) -> Result<OrfModel<T>> {
    let n = data.n();
    if n < 4 * cfg.min_leaf {
        return Err(Error::Size(format!("n = {n} is below 4r = {}", 4 * cfg.min_leaf)));
    }
    cfg.validate(data.dims().d)?;
    let halves = split_halves(data, rng::derive_seed(cfg.seed, "halves", 0))?;
    let nuisance_forest = grow_forest(data, &halves.first, cfg, node_learner, cfg.seed, "nuisance-forest")?;
    let target_forest = grow_forest(data, &halves.second, cfg, node_learner, cfg.seed, "target-forest")?;
    Ok(OrfModel { config: cfg.clone(), halves, nuisance_forest, target_forest, fingerprint: data.fingerprint(), n })
}

impl<T: Real> OrfModel<T> {
    fn check_data(&self, data: &Dataset<T>) -> Result<()> {
        if data.n() != self.n || data.fingerprint() != self.fingerprint {
            return Err(Error::Shape("dataset does not match the one the model was fitted on".into()));
        }
        Ok(())
    }

    /// Point estimate at `x`: weighted local nuisances on the first half,
    /// then kernel residual regression on the second half.
    pub fn estimate_effect(
        &self,
        data: &Dataset<T>,
        final_learner: &dyn NuisanceLearner<T>,
        x: &[T],
    ) -> Result<EffectEstimate<T>> {
        self.check_data(data)?;
        let d = data.dims().d;
        if x.len() != d {
            return Err(Error::Shape(format!("test point has {} features, expected {d}", x.len())));
        }

        let omega = forest_weights(&self.nuisance_forest, x, &self.halves.first);
        let (rows, w): (Vec<usize>, Vec<T>) = self
            .halves
            .first
            .iter()
            .zip(&omega)
            .filter(|(_, &w)| w > T::zero())
            .map(|(&i, &w)| (i, w))
            .unzip();
        if rows.is_empty() {
            return Err(Error::Weight("no first-half observation shares a leaf with the test point".into()));
        }
        let pair = fit_nuisance_pair(data, &rows, Some(&w), final_learner, point_seed(self.config.seed, x))?;

        let a = forest_weights(&self.target_forest, x, &self.halves.second);
        let mut weights = Vec::new();
        let mut ry = Vec::new();
        let mut rt = Vec::new();
        for (&i, &ai) in self.halves.second.iter().zip(&a) {
            if ai > T::zero() {
                let (y, t) = pair.residualize(&data.row(i));
                weights.push(ai);
                ry.push(y);
                rt.push(t);
            }
        }
        let theta = kernel_theta(&weights, &ry, &rt)?;
        let sum_sq: T = weights.iter().map(|&v| v * v).sum();
        Ok(EffectEstimate { x: x.to_vec(), theta, ci_low: None, ci_high: None, n_effective: T::one() / sum_sq })
    }

    /// Estimates at several points in parallel; output order matches `points`.
    pub fn estimate_effects(
        &self,
        data: &Dataset<T>,
        final_learner: &dyn NuisanceLearner<T>,
        points: &[Vec<T>],
    ) -> Result<Vec<EffectEstimate<T>>> {
        points.par_iter().map(|x| self.estimate_effect(data, final_learner, x)).collect()
    }
}

fn point_seed<T: Real>(seed: u64, x: &[T]) -> u64 {
    x.iter()
        .fold(rng::derive_seed(seed, "local-nuisance", 0), |acc, v| rng::derive_seed(acc, "coordinate", v.as_f64().to_bits()))
}

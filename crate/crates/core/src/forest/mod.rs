//! Forest kernel learner and the two-stage orthogonal forest estimator.

mod bootstrap;
pub mod moments;
mod orf;
mod splits;
mod tree;

pub use bootstrap::{bootstrap_ci, bootstrap_replicates, percentile, replicate_interval, BootstrapConfig};
pub use moments::{fit_node_theta, heterogeneity_score, kernel_theta, newton_proxy, NodeFit};
pub use orf::{fit_orf, fit_orf_with, EffectEstimate, OrfModel};
pub use splits::propose_splits;
pub use tree::{grow_tree, node_residualize, GradientTree, NodeKind, TreeNode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{subsample_from, Dataset};
use crate::error::{Error, Result};
use crate::nuisance::{LearnerSpec, NuisanceLearner};
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    /// Trees per forest.
    pub trees: usize,
    /// Subsample size per tree; defaults to `ceil(0.45 * half size)`.
    pub subsample: Option<usize>,
    /// Minimum leaf size in both tree halves.
    pub min_leaf: usize,
    /// Minimum share of a parent's rows each child keeps, in both halves.
    pub min_balance: f64,
    pub max_splits: usize,
    /// Features sampled per split; defaults to `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    /// Proposed thresholds per sampled feature.
    pub proposals: usize,
    pub node_learner: LearnerSpec,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 500,
            subsample: None,
            min_leaf: 10,
            min_balance: 0.1,
            max_splits: 30,
            features_per_split: None,
            proposals: 10,
            node_learner: LearnerSpec::lasso(1e-3),
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::Config("forest.trees must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("forest.min_leaf must be >= 1".into()));
        }
        if !(self.min_balance > 0.0 && self.min_balance <= 0.5) {
            return Err(Error::Config("forest.min_balance must lie in (0, 0.5]".into()));
        }
        if self.proposals == 0 {
            return Err(Error::Config("forest.proposals must be >= 1".into()));
        }
        if let Some(m) = self.features_per_split {
            if m == 0 || m > d {
                return Err(Error::Config(format!("forest.features_per_split must lie in [1, {d}]")));
            }
        }
        Ok(())
    }

    pub fn features_per_split(&self, d: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| ((d as f64).sqrt().ceil() as usize).clamp(1, d))
    }

    /// Subsample size for a pool of `pool` rows.
    pub fn subsample_size(&self, pool: usize) -> Result<usize> {
        let s = self.subsample.unwrap_or_else(|| {
            let default = (0.45 * pool as f64).ceil() as usize;
            default.max(4 * self.min_leaf).min(pool)
        });
        if s < 2 || s > pool {
            return Err(Error::Config(format!("subsample size {s} outside [2, {pool}]")));
        }
        Ok(s)
    }
}

/// A forest grown on subsamples of one index pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KernelForest<T: Real> {
    pub trees: Vec<GradientTree<T>>,
    pub source: Vec<usize>,
}

/// Grows `cfg.trees` honest trees on subsamples of `pool`. Tree `b` uses a
/// seed derived from `(seed, label, b)`, so the result does not depend on
/// thread scheduling.
pub fn grow_forest<T: Real>(
    data: &Dataset<T>,
    pool: &[usize],
    cfg: &ForestConfig,
    learner: &dyn NuisanceLearner<T>,
    seed: u64,
    label: &str,
) -> Result<KernelForest<T>> {
    cfg.validate(data.dims().d)?;
    let s = cfg.subsample_size(pool.len())?;
    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|b| {
            let tree_seed = rng::derive_seed(seed, label, b as u64);
            let halves = subsample_from(pool, s, rng::derive_seed(tree_seed, "subsample", 0))?;
            grow_tree(data, &halves.first, &halves.second, cfg, learner, tree_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelForest { trees, source: pool.to_vec() })
}

/// Similarity weights of the rows in `over` to the point `x`: the average
/// over trees of `1 / |L_b(x) & S2_b|` for rows in the matched leaf.
/// Output is aligned with `over`.
pub fn forest_weights<T: Real>(forest: &KernelForest<T>, x: &[T], over: &[usize]) -> Vec<T> {
    let max = over.iter().copied().max().map_or(0, |m| m + 1);
    let mut position = vec![usize::MAX; max];
    for (k, &i) in over.iter().enumerate() {
        position[i] = k;
    }
    let mut weights = vec![T::zero(); over.len()];
    let b = T::from_count(forest.trees.len().max(1));
    for tree in &forest.trees {
        let members = tree.matched(x);
        if members.is_empty() {
            continue;
        }
        let w = T::one() / (b * T::from_count(members.len()));
        for &i in members {
            if let Some(&k) = position.get(i) {
                if k != usize::MAX {
                    weights[k] += w;
                }
            }
        }
    }
    weights
}

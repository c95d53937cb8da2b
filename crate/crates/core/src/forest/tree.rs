use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::moments::{fit_node_theta, heterogeneity_score, influence, newton_step, NodeFit};
use super::splits::propose_splits;
use super::ForestConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::{fit_nuisance_pair, NuisanceLearner};
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "type", rename_all = "snake_case")]
pub enum NodeKind<T: Real> {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: T, left: usize, right: usize },
    Leaf { leaf: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TreeNode<T: Real> {
    pub kind: NodeKind<T>,
    /// Node estimate, when the node was large enough to residualize.
    pub theta: Option<T>,
    pub hessian: Option<T>,
}

/// Honest tree: splits chosen on `split_sample`, leaves populated with
/// `estimation_sample`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GradientTree<T: Real> {
    pub nodes: Vec<TreeNode<T>>,
    /// Estimation-sample members of each leaf, sorted.
    pub leaves: Vec<Vec<usize>>,
    pub split_sample: Vec<usize>,
    pub estimation_sample: Vec<usize>,
}

impl<T: Real> GradientTree<T> {
    pub fn leaf_of(&self, x: &[T]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at].kind {
                NodeKind::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
                NodeKind::Leaf { leaf } => return *leaf,
            }
        }
    }

    /// Estimation-sample members sharing a leaf with `x`.
    pub fn matched(&self, x: &[T]) -> &[usize] {
        &self.leaves[self.leaf_of(x)]
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Split { .. })).count()
    }
}

/// In-sample residuals `(Y - q_P, T - g_P)` from nuisances fitted,
/// unweighted, on the node's rows.
pub fn node_residualize<T: Real>(
    data: &Dataset<T>,
    rows: &[usize],
    learner: &dyn NuisanceLearner<T>,
    min_leaf: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    let floor = min_leaf.max(5);
    if rows.len() < floor {
        return Err(Error::Size(format!("node has {} rows, residualization needs {floor}", rows.len())));
    }
    let pair = fit_nuisance_pair(data, rows, None, learner, seed)?;
    Ok(rows.iter().map(|&i| pair.residualize(&data.row(i))).unzip())
}

struct Pending {
    node: usize,
    path: String,
    s1: Vec<usize>,
    s2: Vec<usize>,
}

struct ChosenSplit<T> {
    feature: usize,
    threshold: T,
}

type NodeOutcome<T> = (Option<NodeFit<T>>, Option<ChosenSplit<T>>);

/// Grows one tree breadth-first until the queue empties or `max_splits`
/// splits have been made.
pub fn grow_tree<T: Real>(
    data: &Dataset<T>,
    split_sample: &[usize],
    estimation_sample: &[usize],
    cfg: &ForestConfig,
    learner: &dyn NuisanceLearner<T>,
    seed: u64,
) -> Result<GradientTree<T>> {
    let r = cfg.min_leaf;
    if split_sample.len() < 2 * r || estimation_sample.len() < 2 * r {
        return Err(Error::Size(format!(
            "tree halves of sizes {} and {} are below 2r = {}",
            split_sample.len(),
            estimation_sample.len(),
            2 * r
        )));
    }
    let m = cfg.features_per_split(data.dims().d);
    let mut nodes = vec![TreeNode { kind: NodeKind::Leaf { leaf: usize::MAX }, theta: None, hessian: None }];
    let mut leaves: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::from([Pending {
        node: 0,
        path: "root".into(),
        s1: split_sample.to_vec(),
        s2: estimation_sample.to_vec(),
    }]);
    let mut splits = 0usize;

    while let Some(p) = queue.pop_front() {
        let attempt = if splits < cfg.max_splits {
            let node_seed = rng::derive_seed(seed, "node", p.node as u64);
            try_split(data, &p, cfg, m, learner, node_seed).map_err(|e| Error::AtNode {
                path: p.path.clone(),
                source: Box::new(e),
            })?
        } else {
            (None, None)
        };
        let (fit, choice) = attempt;
        nodes[p.node].theta = fit.map(|f| f.theta);
        nodes[p.node].hessian = fit.map(|f| f.hessian);
        match choice {
            Some(c) => {
                let goes_left = |i: &usize| data.row(*i).x[c.feature] <= c.threshold;
                let (l1, r1): (Vec<usize>, Vec<usize>) = p.s1.iter().partition(|i| goes_left(i));
                let (l2, r2): (Vec<usize>, Vec<usize>) = p.s2.iter().partition(|i| goes_left(i));
                let (left, right) = (nodes.len(), nodes.len() + 1);
                for _ in 0..2 {
                    nodes.push(TreeNode { kind: NodeKind::Leaf { leaf: usize::MAX }, theta: None, hessian: None });
                }
                nodes[p.node].kind = NodeKind::Split { feature: c.feature, threshold: c.threshold, left, right };
                queue.push_back(Pending { node: left, path: format!("{}/L", p.path), s1: l1, s2: l2 });
                queue.push_back(Pending { node: right, path: format!("{}/R", p.path), s1: r1, s2: r2 });
                splits += 1;
            }
            None => {
                let mut members = p.s2;
                members.sort_unstable();
                nodes[p.node].kind = NodeKind::Leaf { leaf: leaves.len() };
                leaves.push(members);
            }
        }
    }

    let mut split_sample = split_sample.to_vec();
    let mut estimation_sample = estimation_sample.to_vec();
    split_sample.sort_unstable();
    estimation_sample.sort_unstable();
    Ok(GradientTree { nodes, leaves, split_sample, estimation_sample })
}

fn try_split<T: Real>(
    data: &Dataset<T>,
    p: &Pending,
    cfg: &ForestConfig,
    m: usize,
    learner: &dyn NuisanceLearner<T>,
    seed: u64,
) -> Result<NodeOutcome<T>> {
    let r = cfg.min_leaf;
    if p.s1.len() < r.max(5) {
        return Ok((None, None));
    }
    let (ry, rt) = node_residualize(data, &p.s1, learner, r, rng::derive_seed(seed, "nuisance", 0))?;
    let fit = match fit_node_theta(&ry, &rt) {
        Ok(f) => f,
        Err(Error::NoTreatmentVariation { .. }) => return Ok((None, None)),
        Err(e) => return Err(e),
    };
    if fit.hessian == T::zero() {
        return Ok((Some(fit), None));
    }
    let g: Vec<T> = ry.iter().zip(&rt).map(|(&y, &t)| influence(fit.theta, y, t)).collect();

    let d = data.dims().d;
    let node_x = Array2::from_shape_fn((p.s1.len(), d), |(k, j)| data.row(p.s1[k]).x[j]);
    let candidates = propose_splits(node_x.view(), m, cfg.proposals, rng::derive_seed(seed, "proposals", 0))?;

    let (n1, n2) = (p.s1.len(), p.s2.len());
    let rho = T::lit(cfg.min_balance);
    let mut best: Option<(T, ChosenSplit<T>)> = None;
    for (feature, threshold) in candidates {
        let mut n1l = 0usize;
        let mut gl = T::zero();
        let mut gr = T::zero();
        for (k, &i) in p.s1.iter().enumerate() {
            if data.row(i).x[feature] <= threshold {
                n1l += 1;
                gl += g[k];
            } else {
                gr += g[k];
            }
        }
        let n2l = p.s2.iter().filter(|&&i| data.row(i).x[feature] <= threshold).count();
        let (n1r, n2r) = (n1 - n1l, n2 - n2l);
        if n1l.min(n1r).min(n2l).min(n2r) < r {
            continue;
        }
        let ratio = |a: usize, b: usize| T::from_count(a) / T::from_count(b);
        if ratio(n1l, n1) < rho || ratio(n1r, n1) < rho || ratio(n2l, n2) < rho || ratio(n2r, n2) < rho {
            continue;
        }
        let proxy_l = newton_step(fit.theta, fit.hessian, gl);
        let proxy_r = newton_step(fit.theta, fit.hessian, gr);
        let score = heterogeneity_score(proxy_l, proxy_r, fit.theta, n1l, n1r);
        if !score.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, ChosenSplit { feature, threshold }));
        }
    }
    Ok((Some(fit), best.map(|(_, c)| c)))
}

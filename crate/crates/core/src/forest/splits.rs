use ndarray::ArrayView2;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Candidate `(feature, threshold)` pairs for a node. Samples `m` feature
/// columns, then up to `k` distinct observed values of each. Output is
/// sorted by feature, then threshold.
pub fn propose_splits<T: Real>(node_x: ArrayView2<'_, T>, m: usize, k: usize, seed: u64) -> Result<Vec<(usize, T)>> {
    let (n, d) = node_x.dim();
    if n == 0 {
        return Err(Error::Node("cannot propose splits for an empty node".into()));
    }
    if m == 0 || m > d || k == 0 {
        return Err(Error::Config(format!("need 1 <= m <= d and k >= 1 (m={m}, d={d}, k={k})")));
    }
    let mut r = rng::stream(seed, "propose-splits", 0);
    let mut features = index::sample(&mut r, d, m).into_vec();
    features.sort_unstable();
    let mut out = Vec::new();
    for j in features {
        let mut values: Vec<T> = node_x.column(j).to_vec();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        values.dedup();
        let take = k.min(values.len());
        let mut picked = index::sample(&mut r, values.len(), take).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|p| (j, values[p])));
    }
    Ok(out)
}

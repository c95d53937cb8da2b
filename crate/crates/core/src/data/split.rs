use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Two disjoint index sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IndexSplit {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl IndexSplit {
    fn from_shuffled(mut idx: Vec<usize>) -> Self {
        let mut second = idx.split_off(idx.len() / 2);
        idx.sort_unstable();
        second.sort_unstable();
        Self { first: idx, second }
    }

    pub fn len(&self) -> usize {
        self.first.len() + self.second.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Uniformly random halves of `0..n`; for odd `n` the second half is larger.
pub fn split_halves<T>(dataset: &Dataset<T>, seed: u64) -> Result<IndexSplit>
where
    T: crate::scalar::Real,
{
    let n = dataset.n();
    if n < 2 {
        return Err(Error::Size(format!("cannot halve {n} observations")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "split-halves", 0));
    Ok(IndexSplit::from_shuffled(idx))
}

/// Draws `s` indices of `0..n` without replacement and halves them.
pub fn subsample<T>(dataset: &Dataset<T>, s: usize, seed: u64) -> Result<IndexSplit>
where
    T: crate::scalar::Real,
{
    let all: Vec<usize> = (0..dataset.n()).collect();
    subsample_from(&all, s, seed)
}

/// As [`subsample`], drawing from an arbitrary index pool.
pub fn subsample_from(pool: &[usize], s: usize, seed: u64) -> Result<IndexSplit> {
    if s < 2 || s > pool.len() {
        return Err(Error::Size(format!(
            "subsample size {s} outside [2, {}]",
            pool.len()
        )));
    }
    let mut r = rng::stream(seed, "subsample", 0);
    let picked: Vec<usize> = index::sample(&mut r, pool.len(), s).into_iter().map(|k| pool[k]).collect();
    Ok(IndexSplit::from_shuffled(picked))
}

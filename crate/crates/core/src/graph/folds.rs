use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Inverted k-fold partition: fold `i`'s label set is the *training* set and
/// everything else evaluates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

/// Randomly partitions users `0..n` into `k` near-equal label sets.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    let users: Vec<usize> = (0..n).collect();
    FoldPlan::over(&users, k, seed)
}

impl FoldPlan {
    /// Partitions an arbitrary user list (typically the labeled users).
    pub fn over(users: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
        if k < 2 || k > users.len() {
            return Err(Error::param(format!(
                "fold count {k} must lie in [2, {}]",
                users.len()
            )));
        }
        let mut order = users.to_vec();
        order.shuffle(&mut stream(seed, Stream::Folds));
        let mut folds = alloc::vec![Vec::new(); k];
        for (pos, u) in order.into_iter().enumerate() {
            folds[pos % k].push(u);
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        Ok(FoldPlan { k, seed, folds })
    }

    pub fn training_set(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn evaluation_set(&self, fold: usize) -> Vec<usize> {
        let mut rest: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        rest.sort_unstable();
        rest
    }
}

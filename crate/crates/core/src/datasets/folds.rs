use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::seed::rng_for;

/// Seeded k-fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// `assignment[i]` is the fold holding instance `i` as test data.
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Share of each fold's non-test portion reserved for development.
pub const DEV_FRACTION: f64 = 0.1;

impl FoldPlan {
    /// Shuffles `0..n` and cuts it into `k` contiguous folds whose sizes differ by at most one.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        ensure!(k >= 2, "k-fold needs k >= 2, got {k}");
        ensure!(n >= k, "cannot cut {n} instances into {k} folds");
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(seed, "kfold", &[]));
        let mut assignment = vec![0; n];
        let (base, extra) = (n / k, n % k);
        let mut pos = 0;
        for f in 0..k {
            let size = base + usize::from(f < extra);
            for &i in &order[pos..pos + size] {
                assignment[i] = f;
            }
            pos += size;
        }
        Ok(Self { k, seed, assignment })
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }
}

/// For each fold: test = the fold, dev = a seeded 10% of the rest, train = remainder.
pub fn kfold_split(plan: &FoldPlan) -> Vec<FoldSplit> {
    (0..plan.k)
        .map(|fold| {
            let test: Vec<usize> = (0..plan.assignment.len())
                .filter(|&i| plan.assignment[i] == fold)
                .collect();
            let mut rest: Vec<usize> = (0..plan.assignment.len())
                .filter(|&i| plan.assignment[i] != fold)
                .collect();
            rest.shuffle(&mut rng_for(plan.seed, "dev-split", &[fold as u64]));
            let n_dev = if rest.len() >= 2 {
                ((rest.len() as f64 * DEV_FRACTION).round() as usize).max(1)
            } else {
                0
            };
            let mut dev = rest[..n_dev].to_vec();
            let mut train = rest[n_dev..].to_vec();
            dev.sort_unstable();
            train.sort_unstable();
            FoldSplit {
                fold,
                train,
                dev,
                test,
            }
        })
        .collect()
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Cross-validation fold assignment, stratified by arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub folds: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    /// Shuffle each stratum with a seeded generator and deal its members
    /// round-robin over the folds. The dealing position carries over between
    /// strata so fold sizes differ by at most one.
    pub fn stratified(strata: &[u8], folds: usize, seed: u64) -> Result<Self> {
        let n = strata.len();
        if folds < 2 {
            return Err(Error::Domain(format!("need at least 2 folds, got {folds}")));
        }
        if n < folds {
            return Err(Error::Domain(format!(
                "{n} rows cannot fill {folds} non-empty folds"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<u8> = strata.to_vec();
        labels.sort_unstable();
        labels.dedup();
        let mut assignment = vec![0usize; n];
        let mut next = 0usize;
        for label in labels {
            let mut members: Vec<usize> = (0..n).filter(|&i| strata[i] == label).collect();
            members.shuffle(&mut rng);
            for i in members {
                assignment[i] = next % folds;
                next += 1;
            }
        }
        Ok(FoldPlan {
            folds,
            assignment,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// (training rows, validation rows) for fold `v`.
    pub fn split(&self, v: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != v)
    }
}

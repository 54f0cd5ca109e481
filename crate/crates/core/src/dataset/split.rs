use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Role};
use crate::error::{Error, Result};

/// Seeded random train/validation split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    /// `round(train_fraction * n)`, half away from zero.
    pub fn train_len(&self, n: usize) -> usize {
        (self.train_fraction * n as f64).round() as usize
    }
}

/// Shuffles record indices with `spec.seed` and takes the first
/// `round(fraction * n)` as the training set. Both halves come back id-sorted.
pub fn split_dataset(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if d.is_empty() {
        return Err(Error::contract("cannot split an empty dataset"));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::contract(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = spec.train_len(d.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| d.records()[i].clone()).collect::<Vec<_>>();
    let train = d.derive(format!("{}_train", d.name), Role::Train, pick(&order[..n_train]))?;
    let val = d.derive(format!("{}_val", d.name), Role::Val, pick(&order[n_train..]))?;
    Ok((train, val))
}

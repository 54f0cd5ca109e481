use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CurationScore;
use crate::dataset::{Dataset, Role};
use crate::error::{Error, Result};

/// Subset sizes: `seed_size`, then `step` more at a time up to `max_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPlan {
    pub seed_size: usize,
    pub step: usize,
    pub max_size: usize,
}

impl Default for SubsetPlan {
    fn default() -> Self {
        SubsetPlan {
            seed_size: 400,
            step: 200,
            max_size: 2000,
        }
    }
}

impl SubsetPlan {
    pub fn validate(&self) -> Result<()> {
        if self.step == 0 {
            return Err(Error::contract("subset step must be at least 1"));
        }
        if self.seed_size > self.max_size {
            return Err(Error::contract(format!(
                "seed size {} exceeds maximum size {}",
                self.seed_size, self.max_size
            )));
        }
        Ok(())
    }

    /// All subset sizes in increasing order; `max_size` is always last.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = (self.seed_size..=self.max_size).step_by(self.step).collect();
        if sizes.last() != Some(&self.max_size) {
            sizes.push(self.max_size);
        }
        sizes
    }
}

impl fmt::Display for SubsetPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.seed_size, self.step, self.max_size)
    }
}

impl FromStr for SubsetPlan {
    type Err = Error;

    /// `seed:step:max`, e.g. `400:200:2000`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::contract(format!("subset plan must look like 400:200:2000, got '{s}'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
        let plan = SubsetPlan {
            seed_size: n(parts[0])?,
            step: n(parts[1])?,
            max_size: n(parts[2])?,
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Which pool images form the seed shared by every method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSelection {
    /// The first `seed_size` records in id order.
    #[default]
    FirstById,
    /// A seeded random draw; still identical across scoring methods.
    Random(u64),
}

/// Builds the nested training subsets for every size in `plan`.
///
/// The seed images are always included and never ranked. The rest of the
/// pool is sorted by ascending distance, ties broken by id, and each subset
/// adds the next ranked images on top of the previous one.
pub fn rank_and_select(
    scores: &[CurationScore],
    pool: &Dataset,
    plan: &SubsetPlan,
    seed: SeedSelection,
) -> Result<Vec<Dataset>> {
    plan.validate()?;
    if plan.max_size > pool.len() {
        return Err(Error::contract(format!(
            "plan needs {} images but the pool has {}",
            plan.max_size,
            pool.len()
        )));
    }
    let mut distance: BTreeMap<&str, f64> = BTreeMap::new();
    for s in scores {
        if pool.get(&s.image_id).is_none() {
            return Err(Error::contract(format!(
                "score for '{}' which is not in the pool",
                s.image_id
            )));
        }
        if distance.insert(&s.image_id, s.distance).is_some() {
            return Err(Error::contract(format!("duplicate score for '{}'", s.image_id)));
        }
    }
    if let Some(missing) = pool.records().iter().find(|r| !distance.contains_key(r.id.as_str())) {
        return Err(Error::contract(format!("no score for pool image '{}'", missing.id)));
    }
    let kinds: BTreeSet<_> = scores.iter().map(|s| (s.method, s.aggregation)).collect();
    if kinds.len() > 1 {
        return Err(Error::contract("scores mix several methods or aggregations"));
    }
    let label = scores.first().map(|s| s.method.as_str()).unwrap_or("none");

    let mut order: Vec<usize> = (0..pool.len()).collect();
    if let SeedSelection::Random(s) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
    }
    let seed_idx: BTreeSet<usize> = order[..plan.seed_size].iter().copied().collect();

    let mut ranked: Vec<usize> = (0..pool.len()).filter(|i| !seed_idx.contains(i)).collect();
    let recs = pool.records();
    ranked.sort_by(|&a, &b| {
        distance[recs[a].id.as_str()]
            .total_cmp(&distance[recs[b].id.as_str()])
            .then_with(|| recs[a].id.cmp(&recs[b].id))
    });

    plan.sizes()
        .into_iter()
        .map(|size| {
            let members = seed_idx
                .iter()
                .chain(&ranked[..size - plan.seed_size])
                .map(|&i| recs[i].clone());
            pool.derive(format!("{}_{label}_{size}", pool.name), Role::Train, members)
        })
        .collect()
}

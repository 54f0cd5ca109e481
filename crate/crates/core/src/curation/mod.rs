//! Similarity curation of a synthetic pool against a real reference set.
//!
//! Every pool image gets a distance to the reference set (brightness
//! difference or perceptual-hash Hamming distance, aggregated over all
//! reference images). Training subsets are then built as a fixed seed plus
//! the closest remaining images, growing in fixed steps.

mod cache;
mod select;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::FeatureCache;
pub use select::{rank_and_select, SeedSelection, SubsetPlan};

use crate::dataset::{Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::features::{self, hamming, perceptual_hash, HashAlgorithm, HashBits, PerceptualHash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Brightness,
    Phash,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Brightness => "brightness",
            ScoreKind::Phash => "phash",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brightness" => Ok(ScoreKind::Brightness),
            "phash" => Ok(ScoreKind::Phash),
            other => Err(Error::contract(format!("unknown scoring method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Min,
    Mean,
    Median,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Min => "min",
            Aggregation::Mean => "mean",
            Aggregation::Median => "median",
        }
    }

    /// Aggregates non-empty distances. The values are sorted first so the
    /// result does not depend on reference order, even for float sums.
    pub fn apply(self, distances: &mut [f64]) -> f64 {
        assert!(!distances.is_empty());
        distances.sort_by(f64::total_cmp);
        let n = distances.len();
        match self {
            Aggregation::Min => distances[0],
            Aggregation::Mean => distances.iter().sum::<f64>() / n as f64,
            Aggregation::Median if n % 2 == 1 => distances[n / 2],
            Aggregation::Median => (distances[n / 2 - 1] + distances[n / 2]) / 2.0,
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Aggregation::Min),
            "mean" => Ok(Aggregation::Mean),
            "median" => Ok(Aggregation::Median),
            other => Err(Error::contract(format!("unknown aggregation '{other}'"))),
        }
    }
}

/// Feature used for scoring, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoringMethod {
    Brightness,
    Phash { algorithm: HashAlgorithm, bits: HashBits },
}

impl ScoringMethod {
    pub fn kind(&self) -> ScoreKind {
        match self {
            ScoringMethod::Brightness => ScoreKind::Brightness,
            ScoringMethod::Phash { .. } => ScoreKind::Phash,
        }
    }

    /// Identifies the feature and its parameters in the feature cache.
    pub fn cache_key(&self) -> String {
        match self {
            ScoringMethod::Brightness => "brightness".into(),
            ScoringMethod::Phash { algorithm, bits } => format!("phash:{algorithm}:{}", bits.get()),
        }
    }
}

impl Default for ScoringMethod {
    fn default() -> Self {
        ScoringMethod::Phash {
            algorithm: HashAlgorithm::DctPhash,
            bits: HashBits::B64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageFeature {
    Brightness(f64),
    Hash(PerceptualHash),
}

impl ImageFeature {
    pub fn of_gray(g: &features::GrayImage, method: &ScoringMethod) -> Self {
        match method {
            ScoringMethod::Brightness => ImageFeature::Brightness(features::brightness::<f64>(g).value()),
            ScoringMethod::Phash { algorithm, bits } => ImageFeature::Hash(perceptual_hash(g, *algorithm, *bits)),
        }
    }

    pub fn distance(&self, other: &ImageFeature) -> Result<f64> {
        match (self, other) {
            (ImageFeature::Brightness(a), ImageFeature::Brightness(b)) => Ok((a - b).abs()),
            (ImageFeature::Hash(a), ImageFeature::Hash(b)) => Ok(hamming(a, b)? as f64),
            _ => Err(Error::contract("cannot compare features of different kinds")),
        }
    }
}

/// Distance of one pool image to the reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationScore {
    pub image_id: String,
    pub method: ScoreKind,
    pub aggregation: Aggregation,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub method: ScoringMethod,
    pub aggregation: Aggregation,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            method: ScoringMethod::default(),
            aggregation: Aggregation::Min,
            jobs: 0,
        }
    }
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::contract(format!("cannot start {jobs} worker threads: {e}")))
}

/// Scores every pool image against every reference image. Output follows
/// pool (id) order and does not depend on `jobs`.
pub fn score_against_ref(
    pool: &Dataset,
    reference: &Dataset,
    config: &ScoreConfig,
    cache: Option<&FeatureCache>,
) -> Result<Vec<CurationScore>> {
    if reference.is_empty() {
        return Err(Error::contract("reference set is empty"));
    }
    if pool.is_empty() {
        return Err(Error::contract("pool is empty"));
    }
    thread_pool(config.jobs)?.install(|| {
        let feats = |d: &Dataset| -> Result<Vec<ImageFeature>> {
            d.records()
                .par_iter()
                .map(|r| record_feature(r, &config.method, cache))
                .collect()
        };
        let refs = feats(reference)?;
        let pool_feats = feats(pool)?;
        pool.records()
            .par_iter()
            .zip(pool_feats.par_iter())
            .map(|(rec, feat)| {
                let mut ds = refs.iter().map(|r| feat.distance(r)).collect::<Result<Vec<_>>>()?;
                Ok(CurationScore {
                    image_id: rec.id.clone(),
                    method: config.method.kind(),
                    aggregation: config.aggregation,
                    distance: config.aggregation.apply(&mut ds),
                })
            })
            .collect()
    })
}

fn record_feature(r: &ImageRecord, method: &ScoringMethod, cache: Option<&FeatureCache>) -> Result<ImageFeature> {
    match cache {
        Some(c) => c.feature(&r.image_path, method),
        None => image_feature(&r.image_path, method),
    }
}

pub fn image_feature(path: &Path, method: &ScoringMethod) -> Result<ImageFeature> {
    Ok(ImageFeature::of_gray(&features::load_gray(path)?, method))
}

pub fn write_scores(path: &Path, scores: &[CurationScore]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for s in scores {
        w.serialize(s).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<CurationScore>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_values() {
        let ds = [0.3, 0.1, 0.7, 0.5];
        assert_eq!(Aggregation::Min.apply(&mut ds.clone()), 0.1);
        assert!((Aggregation::Mean.apply(&mut ds.clone()) - 0.4).abs() < 1e-15);
        assert!((Aggregation::Median.apply(&mut ds.clone()) - 0.4).abs() < 1e-15);
        assert_eq!(Aggregation::Median.apply(&mut [3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn brightness_min_hand_case() {
        let pool = ImageFeature::Brightness(0.5);
        let mut ds: Vec<f64> = [0.2, 0.6]
            .iter()
            .map(|&b| pool.distance(&ImageFeature::Brightness(b)).unwrap())
            .collect();
        assert!((Aggregation::Min.apply(&mut ds) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mixed_features_rejected() {
        let a = ImageFeature::Brightness(0.5);
        let b = ImageFeature::Hash(PerceptualHash::from_bits(HashAlgorithm::DctPhash, &[true]));
        assert!(a.distance(&b).is_err());
    }

    #[test]
    fn names_parse() {
        assert_eq!("median".parse::<Aggregation>().unwrap(), Aggregation::Median);
        assert_eq!("phash".parse::<ScoreKind>().unwrap(), ScoreKind::Phash);
        assert!("max".parse::<Aggregation>().is_err());
        assert_eq!(ScoringMethod::default().cache_key(), "phash:dct_phash:64");
    }
}

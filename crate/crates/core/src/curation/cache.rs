use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{ImageFeature, ScoringMethod};
use crate::error::{Error, Result};
use crate::features::{self, PerceptualHash};

/// Per-image features keyed by (content digest, method parameters).
///
/// Stored as CSV `digest,method,value`, where `value` is a brightness or a
/// hex hash. Safe to share between scoring threads.
#[derive(Debug, Default)]
pub struct FeatureCache {
    entries: Mutex<BTreeMap<(String, String), String>>,
    hits: std::sync::atomic::AtomicUsize,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Missing file means an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        let cache = FeatureCache::new();
        if !path.exists() {
            return Ok(cache);
        }
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut entries = cache.entries.lock().expect("cache lock");
        for row in reader.deserialize::<(String, String, String)>() {
            let (digest, key, value) = row.map_err(csv_err)?;
            entries.insert((digest, key), value);
        }
        drop(entries);
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["digest", "method", "value"]).map_err(csv_err)?;
        for ((digest, key), value) in self.entries.lock().expect("cache lock").iter() {
            w.write_record([digest, key, value]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(std::sync::atomic::Ordering::Relaxed)
    }

    /// Looks the image up by content digest, computing and storing it on a miss.
    pub fn feature(&self, path: &Path, method: &ScoringMethod) -> Result<ImageFeature> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let key = (hex::encode(Sha256::digest(&bytes)), method.cache_key());
        let cached = self.entries.lock().expect("cache lock").get(&key).cloned();
        if let Some(value) = cached {
            if let Some(feature) = decode(method, &value) {
                self.hits.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                return Ok(feature);
            }
            log::warn!("ignoring unreadable cache entry for {}", path.display());
        }
        let img = image::load_from_memory(&bytes).map_err(|e| Error::image(path, e))?;
        let feature = ImageFeature::of_gray(&features::GrayImage::from_dynamic(&img), method);
        self.entries.lock().expect("cache lock").insert(key, encode(&feature));
        Ok(feature)
    }
}

fn encode(feature: &ImageFeature) -> String {
    match feature {
        // Debug formatting round-trips f64 exactly.
        ImageFeature::Brightness(b) => format!("{b:?}"),
        ImageFeature::Hash(h) => h.to_hex(),
    }
}

fn decode(method: &ScoringMethod, value: &str) -> Option<ImageFeature> {
    match method {
        ScoringMethod::Brightness => value.parse().ok().map(ImageFeature::Brightness),
        ScoringMethod::Phash { algorithm, bits } => PerceptualHash::from_hex(*algorithm, bits.get(), value)
            .ok()
            .map(ImageFeature::Hash),
    }
}

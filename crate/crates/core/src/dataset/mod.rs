//! Dataset domain model: boxes, records, datasets and their on-disk formats.
//!
//! A dataset is a JSON manifest listing records with paths relative to the
//! manifest directory. Boxes live in YOLO text files (`class cx cy w h`,
//! normalized). Masks are 8-bit PNGs where any nonzero pixel is a target
//! pixel; depth maps are 16-bit PNGs scaled by the manifest's `depth_scale`.

mod bbox;
mod io;
mod split;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use bbox::BoundingBox;
pub use io::{
    format_label_line, ingest_render_dir, load_dataset, parse_label_line, write_dataset, WriteMode, MANIFEST_FILE,
};
pub use split::{split_dataset, SplitSpec};

use crate::error::{Error, Result};
use crate::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Rendered,
    GenaiContext,
    GenaiRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
    Ref,
    Test,
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            "ref" => Ok(Role::Ref),
            "test" => Ok(Role::Test),
            other => Err(Error::contract(format!("unknown dataset role '{other}'"))),
        }
    }
}

/// One image with its annotations and conditioning artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub boxes: Vec<BBox>,
    pub mask_path: Option<PathBuf>,
    pub depth_path: Option<PathBuf>,
    pub provenance: Provenance,
    pub width: u32,
    pub height: u32,
}

/// An id-ordered collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub role: Role,
    records: Vec<ImageRecord>,
    /// Metres (or whatever unit the renderer used) per depth-map count.
    pub depth_scale: Option<f64>,
}

impl Dataset {
    /// Sorts `records` by id and rejects duplicate ids.
    pub fn new(name: impl Into<String>, role: Role, mut records: Vec<ImageRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(pair) = records.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Record {
                id: pair[0].id.clone(),
                message: "duplicate record id".into(),
            });
        }
        Ok(Dataset {
            name: name.into(),
            role,
            records,
            depth_scale: None,
        })
    }

    pub fn with_depth_scale(mut self, scale: Option<f64>) -> Self {
        self.depth_scale = scale;
        self
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.records
            .binary_search_by(|r| r.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    /// Builds a dataset from a subset of this one's records, keeping metadata.
    pub fn derive<I>(&self, name: impl Into<String>, role: Role, records: I) -> Result<Dataset>
    where
        I: IntoIterator<Item = ImageRecord>,
    {
        Ok(Dataset::new(name, role, records.into_iter().collect())?.with_depth_scale(self.depth_scale))
    }
}

//! Dataset curation and augmentation for synthetic object-detection data.
//!
//! The crate covers the whole loop from a pool of rendered images to a
//! benchmark report:
//!
//! - [`dataset`]: manifests, YOLO labels, deterministic splits.
//! - [`features`]: grayscale conversion, brightness, perceptual hashes,
//!   Hamming distance and Canny edges.
//! - [`curation`]: scoring a pool against a small real reference set and
//!   building nested training subsets from the ranking.
//! - [`genai`]: background randomization through a pluggable generation
//!   backend, with the original targets pasted back through their masks.
//! - [`eval`]: IoU, per-class average precision and mAP50.
//! - [`report`]: the timing ledger and the mAP50-vs-time report.
//!
//! Numeric code that does not depend on pixel storage is generic over
//! [`Real`]; the aliases below pin it to `f64`, which is what the file
//! formats use.

pub mod curation;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod genai;
pub mod report;
pub mod scalar;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Real;

/// Normalized YOLO box in double precision.
pub type BBox = dataset::BoundingBox<f64>;
/// Detector output in double precision.
pub type Det = eval::Detection<f64>;
/// Evaluation summary in double precision.
pub type Eval = eval::EvalResult<f64>;
/// Brightness value in double precision.
pub type Luminance = features::Brightness<f64>;

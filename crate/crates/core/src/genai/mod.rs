//! Background randomization through a generation backend.
//!
//! For every record the pipeline loads the image, its depth map and binary
//! mask, derives Canny edges, asks the backend for a new image conditioned
//! on all three plus a text prompt, and pastes the original target pixels
//! back through the mask. Boxes carry over unchanged because the targets
//! never move.
//!
//! Backends speak a small HTTP protocol (see [`HttpBackend`]) or run
//! in-process ([`MockBackend`]) for offline work and tests.

mod backend;
mod composite;
mod pipeline;
mod prompt;

use std::time::Duration;

use image::{ImageBuffer, Luma, RgbImage};
use thiserror::Error;

pub use backend::{decode_png, encode_png, HttpBackend, HttpCaptioner, MockBackend, MockCaptioner};
pub use composite::composite;
pub use pipeline::{augment_dataset, AugmentOutcome, AugmentParams, RecordTiming, SkipRecord, SKIP_LOG};
pub use prompt::{Prompt, PromptMode, PromptProvider, CONTEXT_NEGATIVE, RANDOM_NEGATIVE, RANDOM_PROMPTS};

use crate::features::EdgeMap;

pub type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Timeouts, connection failures and 503 responses; worth retrying.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend rejected the request with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("corrupt backend response: {0}")]
    Corrupt(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unavailable(_))
    }
}

/// One unit of work for a generation backend.
#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub image: RgbImage,
    pub depth: DepthImage,
    pub canny: EdgeMap,
    pub prompt: String,
    pub negative_prompt: String,
    pub control_scale: f64,
    pub guidance_scale: f64,
    pub denoise_steps: u32,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn validate(&self) -> crate::Result<()> {
        let dims = self.image.dimensions();
        if self.depth.dimensions() != dims || (self.canny.cols() as u32, self.canny.rows() as u32) != dims {
            return Err(crate::Error::contract("image, depth and canny must share dimensions"));
        }
        if !(self.control_scale > 0.0 && self.control_scale <= 1.0) {
            return Err(crate::Error::contract(format!(
                "control scale must lie in (0, 1], got {}",
                self.control_scale
            )));
        }
        Ok(())
    }

    /// JSON body of `POST /generate`; images travel as base64 PNG.
    pub fn to_wire(&self) -> serde_json::Value {
        use base64::Engine;
        let b64 = |bytes: Vec<u8>| base64::engine::general_purpose::STANDARD.encode(bytes);
        serde_json::json!({
            "image_b64": b64(encode_png(&self.image)),
            "depth_b64": b64(encode_png(&self.depth)),
            "canny_b64": b64(encode_png(&self.canny.to_luma())),
            "prompt": self.prompt,
            "negative_prompt": self.negative_prompt,
            "control_scale": self.control_scale,
            "guidance_scale": self.guidance_scale,
            "steps": self.denoise_steps,
            "seed": self.seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GenerationResult {
    /// Backend output before the targets are pasted back.
    pub generated: RgbImage,
    pub composited: RgbImage,
    pub request_echo: GenerationRequest,
    pub backend_latency: Duration,
}

pub trait GenerationBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<RgbImage, BackendError>;
}

pub trait Captioner: Send + Sync {
    fn caption(&self, image: &RgbImage) -> Result<String, BackendError>;
}

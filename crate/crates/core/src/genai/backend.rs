use std::io::Cursor;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use base64::Engine;
use image::{EncodableLayout, ImageBuffer, ImageFormat, PixelWithColorType, Rgb, RgbImage};

use super::{BackendError, Captioner, GenerationBackend, GenerationRequest};

const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

pub fn encode_png<P, C>(img: &ImageBuffer<P, C>) -> Vec<u8>
where
    P: PixelWithColorType,
    [P::Subpixel]: EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, BackendError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map(|img| img.to_rgb8())
        .map_err(|e| BackendError::Corrupt(format!("response is not a PNG: {e}")))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// In-process backend: returns a solid colour derived from the request seed.
///
/// Failure injection is keyed on the seed, so a given request fails on
/// every attempt and runs stay reproducible.
#[derive(Debug, Default)]
pub struct MockBackend {
    fail_per_mille: u32,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fails roughly `per_mille / 1000` of distinct seeds with a retryable error.
    pub fn failing(per_mille: u32) -> Self {
        MockBackend {
            fail_per_mille: per_mille.min(1000),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn fails_seed(&self, seed: u64) -> bool {
        splitmix64(seed ^ 0xFA11_FA11) % 1000 < self.fail_per_mille as u64
    }

    pub fn color_for_seed(seed: u64) -> Rgb<u8> {
        let [r, g, b, ..] = splitmix64(seed).to_le_bytes();
        Rgb([r, g, b])
    }
}

impl GenerationBackend for MockBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<RgbImage, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if self.fails_seed(request.seed) {
            return Err(BackendError::Unavailable(format!(
                "injected failure for seed {}",
                request.seed
            )));
        }
        let (w, h) = request.image.dimensions();
        Ok(RgbImage::from_pixel(w, h, Self::color_for_seed(request.seed)))
    }
}

/// Captioner returning a fixed string.
#[derive(Debug)]
pub struct MockCaptioner {
    caption: String,
    calls: AtomicUsize,
}

impl MockCaptioner {
    pub fn new(caption: impl Into<String>) -> Self {
        MockCaptioner {
            caption: caption.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Captioner for MockCaptioner {
    fn caption(&self, _image: &RgbImage) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.caption.clone())
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post_json(agent: &ureq::Agent, url: &str, body: &serde_json::Value) -> Result<(u16, Vec<u8>), BackendError> {
    let mut resp = agent
        .post(url)
        .send_json(body)
        .map_err(|e| BackendError::Unavailable(format!("{url}: {e}")))?;
    let status = resp.status().as_u16();
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(MAX_RESPONSE_BYTES)
        .read_to_vec()
        .map_err(|e| BackendError::Unavailable(format!("{url}: reading response: {e}")))?;
    match status {
        200 => Ok((status, bytes)),
        503 => Err(BackendError::Unavailable(format!("{url}: 503 service unavailable"))),
        _ => Err(BackendError::Rejected {
            status,
            message: String::from_utf8_lossy(&bytes).chars().take(500).collect(),
        }),
    }
}

/// Client for `POST {base}/generate`: JSON request, PNG response.
///
/// 503, timeouts and transport failures map to
/// [`BackendError::Unavailable`]; other non-200 statuses are rejections.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        HttpBackend {
            agent: agent(timeout),
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }
}

impl GenerationBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<RgbImage, BackendError> {
        let url = format!("{}/generate", self.base_url);
        let (_, bytes) = post_json(&self.agent, &url, &request.to_wire())?;
        decode_png(&bytes)
    }
}

/// Client for `POST {base}/caption`: `{image_b64}` in, `{"caption"}` out.
#[derive(Debug, Clone)]
pub struct HttpCaptioner {
    agent: ureq::Agent,
    base_url: String,
}

impl HttpCaptioner {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        HttpCaptioner {
            agent: agent(timeout),
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }
}

impl Captioner for HttpCaptioner {
    fn caption(&self, image: &RgbImage) -> Result<String, BackendError> {
        let url = format!("{}/caption", self.base_url);
        let body = serde_json::json!({
            "image_b64": base64::engine::general_purpose::STANDARD.encode(encode_png(image)),
        });
        let (_, bytes) = post_json(&self.agent, &url, &body)?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::Corrupt(format!("caption response is not JSON: {e}")))?;
        match value.get("caption").and_then(|c| c.as_str()) {
            Some(c) if !c.trim().is_empty() => Ok(c.to_string()),
            _ => Err(BackendError::Corrupt(
                "caption response lacks a non-empty 'caption'".into(),
            )),
        }
    }
}

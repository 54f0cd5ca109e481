use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    composite, BackendError, DepthImage, GenerationBackend, GenerationRequest, GenerationResult, Prompt, PromptMode,
    PromptProvider,
};
use crate::curation::thread_pool;
use crate::dataset::{write_dataset, Dataset, ImageRecord, WriteMode};
use crate::error::{Error, Result};
use crate::features::{canny, to_gray, CannyParams};

pub const SKIP_LOG: &str = "skipped.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    /// Seeds the prompt draws; request `i` gets `master_seed + i`.
    pub master_seed: u64,
    pub control_scale: f64,
    pub guidance_scale: f64,
    pub denoise_steps: u32,
    pub canny: CannyParams,
    pub max_retries: u32,
    pub retry_delay: Duration,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Also write the raw backend output under `generated/`.
    pub keep_generated: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            master_seed: 0,
            control_scale: 0.5,
            guidance_scale: 5.0,
            denoise_steps: 50,
            canny: CannyParams::default(),
            max_retries: 2,
            retry_delay: Duration::ZERO,
            jobs: 0,
            keep_generated: false,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.control_scale > 0.0 && self.control_scale <= 1.0) {
            return Err(Error::contract(format!(
                "control scale must lie in (0, 1], got {}",
                self.control_scale
            )));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale > 0.0) {
            return Err(Error::contract("guidance scale must be positive"));
        }
        if self.denoise_steps == 0 {
            return Err(Error::contract("denoise steps must be positive"));
        }
        self.canny.validate()
    }
}

/// A record that produced no output image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub id: String,
    pub reason: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordTiming {
    pub id: String,
    pub attempts: u32,
    pub backend: Duration,
    pub total: Duration,
}

#[derive(Debug)]
pub struct AugmentOutcome {
    pub dataset: Dataset,
    /// Backend gave up on these after retries, or refused them outright.
    pub skipped: Vec<SkipRecord>,
    /// Not admitted: missing mask or depth.
    pub rejected: Vec<SkipRecord>,
    pub timings: Vec<RecordTiming>,
}

enum Outcome {
    Done(ImageRecord, RecordTiming),
    Skipped(SkipRecord),
}

/// Regenerates the background of every admissible record.
///
/// Output images go to `out_dir/images/<id>_<ctx|rnd>.png` and a manifest is
/// written to `out_dir`. The result depends only on the inputs, the prompt
/// source and `master_seed`, never on `jobs`.
pub fn augment_dataset(
    d: &Dataset,
    provider: &PromptProvider,
    backend: &dyn GenerationBackend,
    params: &AugmentParams,
    out_dir: &Path,
) -> Result<AugmentOutcome> {
    params.validate()?;
    let suffix = match provider.mode() {
        PromptMode::RandomPool => "rnd",
        PromptMode::ContextAware | PromptMode::File => "ctx",
    };

    let mut rejected = Vec::new();
    let mut admitted = Vec::new();
    for (index, rec) in d.records().iter().enumerate() {
        let missing: Vec<&str> = [("mask", rec.mask_path.is_none()), ("depth", rec.depth_path.is_none())]
            .into_iter()
            .filter_map(|(what, gone)| gone.then_some(what))
            .collect();
        if missing.is_empty() {
            admitted.push((index, rec));
        } else {
            log::warn!("record {}: no {}, not augmented", rec.id, missing.join(" or "));
            rejected.push(SkipRecord {
                id: rec.id.clone(),
                reason: format!("missing {}", missing.join(" and ")),
                attempts: 0,
            });
        }
    }

    // Prompts are drawn up front, in id order, so the draw sequence does not
    // depend on thread scheduling.
    let mut rng = ChaCha8Rng::seed_from_u64(params.master_seed);
    let prompts = admitted
        .iter()
        .map(|_| provider.make_prompt(&mut rng))
        .collect::<Result<Vec<Prompt>>>()?;

    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let generated_dir = out_dir.join("generated");
    if params.keep_generated {
        std::fs::create_dir_all(&generated_dir).map_err(|e| Error::io(&generated_dir, e))?;
    }
    let dirs = OutputDirs {
        images: images_dir,
        generated: params.keep_generated.then_some(generated_dir),
        suffix,
    };

    let results = thread_pool(params.jobs)?.install(|| {
        admitted
            .par_iter()
            .zip(prompts.into_par_iter())
            .map(|(&(index, rec), prompt)| {
                let seed = params.master_seed.wrapping_add(index as u64);
                augment_record(rec, prompt, seed, provider, backend, params, &dirs)
            })
            .collect::<Vec<_>>()
    });

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut timings = Vec::new();
    for r in results {
        match r? {
            Outcome::Done(rec, t) => {
                records.push(rec);
                timings.push(t);
            }
            Outcome::Skipped(s) => skipped.push(s),
        }
    }

    let dataset = d
        .derive(format!("{}_{suffix}", d.name), d.role, records)?
        .with_depth_scale(d.depth_scale);
    write_dataset(&dataset, out_dir, WriteMode::Reference)?;
    let mut log_entries: Vec<&SkipRecord> = rejected.iter().chain(&skipped).collect();
    log_entries.sort_by(|a, b| a.id.cmp(&b.id));
    write_skip_log(&out_dir.join(SKIP_LOG), &log_entries)?;

    log::info!(
        "augmented {} of {} records ({} skipped, {} rejected)",
        dataset.len(),
        d.len(),
        skipped.len(),
        rejected.len()
    );
    Ok(AugmentOutcome {
        dataset,
        skipped,
        rejected,
        timings,
    })
}

struct OutputDirs {
    images: PathBuf,
    generated: Option<PathBuf>,
    suffix: &'static str,
}

fn augment_record(
    rec: &ImageRecord,
    prompt: Prompt,
    seed: u64,
    provider: &PromptProvider,
    backend: &dyn GenerationBackend,
    params: &AugmentParams,
    dirs: &OutputDirs,
) -> Result<Outcome> {
    let started = Instant::now();
    let mask_path = rec.mask_path.as_deref().expect("admitted records have masks");
    let depth_path = rec.depth_path.as_deref().expect("admitted records have depth");
    let image = image::open(&rec.image_path)
        .map_err(|e| Error::image(&rec.image_path, e))?
        .to_rgb8();
    let mask = image::open(mask_path)
        .map_err(|e| Error::image(mask_path, e))?
        .to_luma8();
    let depth: DepthImage = image::open(depth_path)
        .map_err(|e| Error::image(depth_path, e))?
        .to_luma16();
    if mask.dimensions() != image.dimensions() || depth.dimensions() != image.dimensions() {
        return Err(Error::Record {
            id: rec.id.clone(),
            message: "image, mask and depth sizes differ".into(),
        });
    }

    let request = GenerationRequest {
        canny: canny(&to_gray(&image), &params.canny)?,
        image,
        depth,
        prompt: prompt.text,
        negative_prompt: prompt.negative,
        control_scale: params.control_scale,
        guidance_scale: params.guidance_scale,
        denoise_steps: params.denoise_steps,
        seed,
    };
    request.validate()?;

    let (generated, (attempts, latency)) = match generate_with_retry(backend, &request, params) {
        Ok(ok) => ok,
        Err((err, attempts)) => {
            log::warn!("record {}: skipped after {attempts} attempt(s): {err}", rec.id);
            return Ok(Outcome::Skipped(SkipRecord {
                id: rec.id.clone(),
                reason: err.to_string(),
                attempts,
            }));
        }
    };
    let composited = composite(&request.image, &generated, &mask)?;
    let result = GenerationResult {
        generated,
        composited,
        request_echo: request,
        backend_latency: latency,
    };

    let id = format!("{}_{}", rec.id, dirs.suffix);
    let out_path = dirs.images.join(format!("{id}.png"));
    save_png(&result.composited, &out_path)?;
    if let Some(g) = &dirs.generated {
        save_png(&result.generated, &g.join(format!("{id}.png")))?;
    }

    let new = ImageRecord {
        id: id.clone(),
        image_path: out_path,
        boxes: rec.boxes.clone(),
        mask_path: rec.mask_path.clone(),
        depth_path: rec.depth_path.clone(),
        provenance: provider.provenance(),
        width: rec.width,
        height: rec.height,
    };
    Ok(Outcome::Done(
        new,
        RecordTiming {
            id,
            attempts,
            backend: result.backend_latency,
            total: started.elapsed(),
        },
    ))
}

/// Returns the generated image with (attempts, time spent in the backend).
fn generate_with_retry(
    backend: &dyn GenerationBackend,
    request: &GenerationRequest,
    params: &AugmentParams,
) -> std::result::Result<(RgbImage, (u32, Duration)), (BackendError, u32)> {
    let mut latency = Duration::ZERO;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let t = Instant::now();
        let outcome = backend.generate(request);
        latency += t.elapsed();
        let err = match outcome {
            Ok(img) if img.dimensions() == request.image.dimensions() => return Ok((img, (attempts, latency))),
            Ok(img) => BackendError::Corrupt(format!(
                "expected {:?} output, got {:?}",
                request.image.dimensions(),
                img.dimensions()
            )),
            Err(e) => e,
        };
        if !err.is_retryable() || attempts > params.max_retries {
            return Err((err, attempts));
        }
        if !params.retry_delay.is_zero() {
            std::thread::sleep(params.retry_delay * attempts);
        }
    }
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}

fn write_skip_log(path: &Path, entries: &[&SkipRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["id", "reason", "attempts"]).map_err(csv_err)?;
    for e in entries {
        w.serialize((&e.id, &e.reason, e.attempts)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

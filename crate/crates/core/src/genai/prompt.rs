use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;

use super::Captioner;
use crate::dataset::{Dataset, Provenance};
use crate::error::{Error, Result};

/// Background prompts that stay clear of any industrial setting.
pub const RANDOM_PROMPTS: [&str; 8] = [
    "A scene on the moon, craters, astronaut",
    "A dense forest with sunlight filtering through the trees",
    "A snow-covered mountain range with clear blue skies",
    "An underwater coral reef teeming with fish",
    "A peaceful meadow with wildflowers and tall grass swaying in the breeze",
    "A peaceful beach with waves gently lapping the shore",
    "A desert landscape with sand dunes and clear night sky",
    "A grassy hillside with grazing animals under a bright blue sky",
];

pub const CONTEXT_NEGATIVE: &str = "bad, deformed, ugly";
pub const RANDOM_NEGATIVE: &str = "bad, deformed, ugly, abstract";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    ContextAware,
    RandomPool,
    File,
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context_aware" => Ok(PromptMode::ContextAware),
            "random_pool" => Ok(PromptMode::RandomPool),
            "file" => Ok(PromptMode::File),
            other => Err(Error::contract(format!("unknown prompt mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub negative: String,
}

enum Source {
    Context {
        captioner: Arc<dyn Captioner>,
        refs: Dataset,
    },
    Pool(Vec<String>),
    Lines(Vec<String>),
}

/// Produces the positive/negative prompt pair for each generation.
pub struct PromptProvider {
    source: Source,
    negative: String,
    cursor: AtomicUsize,
    captions: Mutex<BTreeMap<String, String>>,
}

impl std::fmt::Debug for PromptProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PromptProvider")
            .field("mode", &self.mode())
            .field("negative", &self.negative)
            .finish()
    }
}

impl PromptProvider {
    fn with_source(source: Source, negative: &str) -> Self {
        PromptProvider {
            source,
            negative: negative.to_string(),
            cursor: AtomicUsize::new(0),
            captions: Mutex::new(BTreeMap::new()),
        }
    }

    /// Uniform draws from [`RANDOM_PROMPTS`].
    pub fn random_pool() -> Self {
        Self::with_source(
            Source::Pool(RANDOM_PROMPTS.iter().map(|s| s.to_string()).collect()),
            RANDOM_NEGATIVE,
        )
    }

    pub fn custom_pool(pool: Vec<String>) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::contract("random prompt pool is empty"));
        }
        Ok(Self::with_source(Source::Pool(pool), RANDOM_NEGATIVE))
    }

    /// Captions of reference images, each captioned once and cached.
    pub fn context_aware(captioner: Arc<dyn Captioner>, refs: Dataset) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::contract("context-aware prompts need a non-empty reference set"));
        }
        Ok(Self::with_source(Source::Context { captioner, refs }, CONTEXT_NEGATIVE))
    }

    /// Lines of a text file, handed out in order and wrapping around.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(text.lines().map(str::to_string).collect())
            .map_err(|_| Error::contract(format!("prompt file {} has no prompts", path.display())))
    }

    pub fn from_lines(lines: Vec<String>) -> Result<Self> {
        let lines: Vec<String> = lines
            .into_iter()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(Error::contract("prompt list is empty"));
        }
        Ok(Self::with_source(Source::Lines(lines), CONTEXT_NEGATIVE))
    }

    pub fn with_negative(mut self, negative: impl Into<String>) -> Self {
        self.negative = negative.into();
        self
    }

    pub fn mode(&self) -> PromptMode {
        match self.source {
            Source::Context { .. } => PromptMode::ContextAware,
            Source::Pool(_) => PromptMode::RandomPool,
            Source::Lines(_) => PromptMode::File,
        }
    }

    /// Provenance tag for images generated with these prompts.
    pub fn provenance(&self) -> Provenance {
        match self.mode() {
            PromptMode::RandomPool => Provenance::GenaiRandom,
            PromptMode::ContextAware | PromptMode::File => Provenance::GenaiContext,
        }
    }

    pub fn make_prompt<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Prompt> {
        let text = match &self.source {
            Source::Pool(pool) => pool[rng.random_range(0..pool.len())].clone(),
            Source::Lines(lines) => lines[self.cursor.fetch_add(1, Ordering::Relaxed) % lines.len()].clone(),
            Source::Context { captioner, refs } => {
                let rec = &refs.records()[rng.random_range(0..refs.len())];
                let cached = self.captions.lock().expect("caption cache").get(&rec.id).cloned();
                match cached {
                    Some(c) => c,
                    None => {
                        let img = image::open(&rec.image_path)
                            .map_err(|e| Error::image(&rec.image_path, e))?
                            .to_rgb8();
                        let caption = captioner.caption(&img)?;
                        self.captions
                            .lock()
                            .expect("caption cache")
                            .insert(rec.id.clone(), caption.clone());
                        caption
                    }
                }
            }
        };
        Ok(Prompt {
            text,
            negative: self.negative.clone(),
        })
    }
}

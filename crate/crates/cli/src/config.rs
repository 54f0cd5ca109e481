use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simcurate::{Error, Result};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

/// Every tunable of a run. A config file may set any subset; command-line
/// flags override it, and the merged result is written next to the outputs.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ledger: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hardware: Option<String>,
    pub score: ScoreSettings,
    pub select: SelectSettings,
    pub split: SplitSettings,
    pub canny: CannySettings,
    pub augment: AugmentSettings,
    pub eval: EvalSettings,
    /// Filled in per run: the subcommand and the paths it was given.
    pub run: RunSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSettings {
    pub method: String,
    pub algorithm: String,
    pub bits: u32,
    pub aggregation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        ScoreSettings {
            method: "phash".into(),
            algorithm: "dct_phash".into(),
            bits: 64,
            aggregation: "min".into(),
            cache: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSettings {
    pub plan: String,
    /// `first_by_id` or `random` (drawn with the master seed).
    pub seed_selection: String,
}

impl Default for SelectSettings {
    fn default() -> Self {
        SelectSettings {
            plan: "400:200:2000".into(),
            seed_selection: "first_by_id".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train_fraction: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannySettings {
    pub t_low: f64,
    pub t_high: f64,
    pub sigma: f64,
}

impl Default for CannySettings {
    fn default() -> Self {
        let d = simcurate::features::CannyParams::default();
        CannySettings {
            t_low: d.t_low,
            t_high: d.t_high,
            sigma: d.sigma,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSettings {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_url: Option<String>,
    pub mock: bool,
    pub mock_fail_per_mille: u32,
    pub mock_caption: String,
    pub control_scale: f64,
    pub guidance_scale: f64,
    pub steps: u32,
    pub max_retries: u32,
    pub retry_delay_ms: u64,
    pub timeout_secs: u64,
    pub keep_generated: bool,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        AugmentSettings {
            mode: "random_pool".into(),
            prompts: None,
            backend_url: None,
            mock: false,
            mock_fail_per_mille: 0,
            mock_caption: "an industrial workspace with machines and tools".into(),
            control_scale: 0.5,
            guidance_scale: 5.0,
            steps: 50,
            max_retries: 2,
            retry_delay_ms: 500,
            timeout_secs: 300,
            keep_generated: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub iou_threshold: f64,
    /// `all_points` or `eleven_point`.
    pub interpolation: String,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            iou_threshold: 0.5,
            interpolation: "all_points".into(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub command: String,
    pub paths: BTreeMap<String, PathBuf>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::contract(format!("config {}: {e}", path.display())))
    }

    pub fn path(&mut self, key: &str, value: &Path) {
        self.run.paths.insert(key.to_string(), value.to_path_buf());
    }

    /// Writes the resolved settings to `path`.
    pub fn dump(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        let text = toml::to_string(self).map_err(|e| Error::contract(format!("cannot serialize config: {e}")))?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Where a run whose main output is the file `out` keeps its config dump.
pub fn dump_path_for_file(out: &Path) -> PathBuf {
    out.with_extension("config.toml")
}

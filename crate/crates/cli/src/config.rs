//! TOML run configuration: a `[pipeline]` table mirroring the library's
//! `PipelineConfig` plus an optional `[data]` table naming the input files
//! or a synthetic dataset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ter_tsf_core::data::{load_dataset, Dataset, Frequency};
use ter_tsf_core::pipeline::PipelineConfig;
use ter_tsf_core::reward::load_keywords;
use ter_tsf_core::synthetic::{text_signal_dataset, TextSignalConfig};
use ter_tsf_core::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub data: DataConfig,
    pub pipeline: PipelineConfig,
    /// Optional keyword file overriding `pipeline.reward.keywords`.
    pub keywords_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub series: Option<PathBuf>,
    pub texts: Option<PathBuf>,
    pub domain: Option<String>,
    pub frequency: Option<String>,
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub windows: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub amplitude: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let d = TextSignalConfig::default();
        SyntheticConfig {
            windows: d.windows,
            lookback: d.lookback,
            horizon: d.horizon,
            amplitude: d.amplitude,
            noise: d.noise,
            seed: d.seed,
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&content)
            .map_err(|e| Error::config(format!("invalid config {}: {e}", path.display())))?;
        if let Some(kw_path) = &cfg.keywords_file {
            cfg.pipeline.reward.keywords = load_keywords(kw_path)?;
        }
        Ok(cfg)
    }

    /// Resolve the dataset: explicit files win, then the synthetic table.
    pub fn dataset(&self) -> Result<Dataset> {
        if let (Some(series), Some(texts)) = (&self.data.series, &self.data.texts) {
            let domain = self.data.domain.clone().unwrap_or_else(|| {
                series
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "series".to_string())
            });
            let frequency: Frequency = self
                .data
                .frequency
                .as_deref()
                .unwrap_or("monthly")
                .parse()?;
            let (series, texts) = load_dataset(series, texts, &domain, frequency)?;
            return Ok(Dataset::new(series, texts));
        }
        if let Some(synth) = &self.data.synthetic {
            return text_signal_dataset(&TextSignalConfig {
                windows: synth.windows,
                lookback: synth.lookback,
                horizon: synth.horizon,
                amplitude: synth.amplitude,
                noise: synth.noise,
                seed: synth.seed,
            });
        }
        Err(Error::config(
            "config needs either [data] series+texts paths or a [data.synthetic] table",
        ))
    }
}

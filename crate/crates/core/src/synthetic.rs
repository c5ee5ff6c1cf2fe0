//! Synthetic datasets for self-contained runs and directional tests.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, Frequency, TextRecord, TimeSeries};
use crate::error::{Error, Result};

/// Configuration for the text-signal dataset: the horizon of every window
/// shifts by a latent flag that is revealed only in the window's text, so
/// a text-aware forecaster can beat a numeric-only one by a wide margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextSignalConfig {
    /// Number of non-overlapping windows; multiples of 10 keep the 7:1:2
    /// chronological split aligned to window boundaries.
    pub windows: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// Mean shift applied to the horizon when the flag is up (down uses
    /// the negative shift).
    pub amplitude: f64,
    /// Standard deviation of the observation noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TextSignalConfig {
    fn default() -> Self {
        TextSignalConfig {
            windows: 2000,
            lookback: 24,
            horizon: 6,
            amplitude: 1.0,
            noise: 0.1,
            seed: 0,
        }
    }
}

impl TextSignalConfig {
    /// Window stride that makes consecutive windows tile the series.
    pub fn block_len(&self) -> usize {
        self.lookback + self.horizon
    }
}

/// Build the text-signal dataset: `windows` blocks of `lookback + horizon`
/// daily points. Lookback values are pure noise; horizon values are
/// `flag * amplitude + noise` with a per-block random flag. One text
/// record per block spans exactly the lookback range and names the flag
/// direction.
pub fn text_signal_dataset(cfg: &TextSignalConfig) -> Result<Dataset> {
    if cfg.windows < 10 {
        return Err(Error::config("text-signal dataset needs at least 10 windows"));
    }
    if cfg.lookback < 2 || cfg.horizon < 1 {
        return Err(Error::config("lookback must be >= 2 and horizon >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise).map_err(|e| Error::config(e.to_string()))?;
    let block = cfg.block_len();
    let n = cfg.windows * block;
    let origin = NaiveDate::from_ymd_opt(2000, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();

    let mut values = Vec::with_capacity(n);
    let mut texts = Vec::with_capacity(cfg.windows);
    for w in 0..cfg.windows {
        let flag_up: bool = rng.random();
        for _ in 0..cfg.lookback {
            values.push(normal.sample(&mut rng));
        }
        let shift = if flag_up { cfg.amplitude } else { -cfg.amplitude };
        for _ in 0..cfg.horizon {
            values.push(shift + normal.sample(&mut rng));
        }
        let start = origin + Duration::days((w * block) as i64);
        let end = origin + Duration::days((w * block + cfg.lookback - 1) as i64);
        let direction = if flag_up { "up" } else { "down" };
        texts.push(TextRecord::new(
            start,
            end,
            format!("the signal flag is {direction} for the coming period"),
            Some("synthetic".to_string()),
        )?);
    }

    let timestamps = (0..n).map(|i| origin + Duration::days(i as i64)).collect();
    let series = TimeSeries::new("text-signal", Frequency::Daily, timestamps, values)?;
    Ok(Dataset::new(series, texts))
}

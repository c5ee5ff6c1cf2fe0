//! Data model: univariate series with aligned text records, chronological
//! splitting, z-normalization, and sliding-window sample construction.

mod ingest;
mod split;
mod window;

pub use ingest::{load_dataset, parse_instant};
pub use split::{chronological_split, znorm_apply, znorm_fit, znorm_invert};
pub use window::{attach_texts, make_windows};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling frequency of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
    Monthly,
}

impl Frequency {
    pub fn as_str(&self) -> &'static str {
        match self {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
            Frequency::Monthly => "monthly",
        }
    }

    /// Standard lookback/horizon configuration for this frequency.
    pub fn default_config(&self) -> FrequencyConfig {
        match self {
            Frequency::Monthly => FrequencyConfig::new(36, vec![6, 12, 18]),
            Frequency::Weekly => FrequencyConfig::new(96, vec![12, 24, 36]),
            Frequency::Daily => FrequencyConfig::new(336, vec![48, 96, 192]),
        }
    }
}

impl std::str::FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "daily" => Ok(Frequency::Daily),
            "weekly" => Ok(Frequency::Weekly),
            "monthly" => Ok(Frequency::Monthly),
            other => Err(Error::config(format!("unknown frequency `{other}`"))),
        }
    }
}

/// Lookback length and the set of forecast horizons evaluated for a
/// frequency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyConfig {
    pub lookback: usize,
    pub horizons: Vec<usize>,
}

impl FrequencyConfig {
    pub fn new(lookback: usize, horizons: Vec<usize>) -> Self {
        FrequencyConfig { lookback, horizons }
    }
}

/// A univariate series with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub domain: String,
    pub frequency: Frequency,
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(
        domain: impl Into<String>,
        frequency: Frequency,
        timestamps: Vec<NaiveDateTime>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if timestamps.is_empty() {
            return Err(Error::data("series must contain at least one point"));
        }
        if timestamps.len() != values.len() {
            return Err(Error::data(format!(
                "timestamp/value length mismatch: {} vs {}",
                timestamps.len(),
                values.len()
            )));
        }
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::data(format!(
                    "timestamps not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite value {v} in series")));
        }
        Ok(TimeSeries {
            domain: domain.into(),
            frequency,
            timestamps,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn span(&self) -> (NaiveDateTime, NaiveDateTime) {
        (self.timestamps[0], *self.timestamps.last().unwrap())
    }

    /// Copy of the series restricted to `range` (by index).
    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        TimeSeries {
            domain: self.domain.clone(),
            frequency: self.frequency,
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
        }
    }

    /// Same series with normalized values; timestamps unchanged.
    pub fn with_values(&self, values: Vec<f64>) -> TimeSeries {
        debug_assert_eq!(values.len(), self.len());
        TimeSeries {
            domain: self.domain.clone(),
            frequency: self.frequency,
            timestamps: self.timestamps.clone(),
            values,
        }
    }
}

/// A text record aligned to a time interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub body: String,
    pub source: Option<String>,
}

impl TextRecord {
    pub fn new(
        start: NaiveDateTime,
        end: NaiveDateTime,
        body: impl Into<String>,
        source: Option<String>,
    ) -> Result<Self> {
        if start > end {
            return Err(Error::data(format!(
                "text record start {start} is after end {end}"
            )));
        }
        Ok(TextRecord {
            start,
            end,
            body: body.into(),
            source,
        })
    }

    /// True when the record's interval intersects `[span.0, span.1]`.
    pub fn intersects(&self, span: (NaiveDateTime, NaiveDateTime)) -> bool {
        self.start <= span.1 && self.end >= span.0
    }
}

/// Which chronological split a sample was cut from. Carried on every
/// sample so training and generation can refuse leaked data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

/// One forecasting instance: a lookback window, its future truth, and the
/// text records that overlap the lookback span.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub split: SplitTag,
    pub lookback: Vec<f64>,
    pub horizon_truth: Vec<f64>,
    pub lookback_span: (NaiveDateTime, NaiveDateTime),
    pub texts: Vec<TextRecord>,
}

impl Sample {
    /// Original texts joined in start order; `None` when the window has no
    /// non-empty text.
    pub fn joined_text(&self) -> Option<String> {
        let bodies: Vec<&str> = self
            .texts
            .iter()
            .filter(|t| !t.body.is_empty())
            .map(|t| t.body.as_str())
            .collect();
        if bodies.is_empty() {
            None
        } else {
            Some(bodies.join("\n"))
        }
    }
}

/// Normalization statistics fitted on the training split only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    /// Population standard deviation (divide by N).
    pub std: f64,
}

/// A series together with its text records; the unit the pipeline runs on.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: TimeSeries,
    pub texts: Vec<TextRecord>,
}

impl Dataset {
    pub fn new(series: TimeSeries, mut texts: Vec<TextRecord>) -> Self {
        texts.sort_by_key(|t| (t.start, t.end));
        Dataset { series, texts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(day: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 1, day)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    #[test]
    fn series_rejects_unsorted_timestamps() {
        let err = TimeSeries::new(
            "d",
            Frequency::Daily,
            vec![ts(2), ts(1)],
            vec![1.0, 2.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn series_rejects_non_finite() {
        let err = TimeSeries::new(
            "d",
            Frequency::Daily,
            vec![ts(1), ts(2)],
            vec![1.0, f64::NAN],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn default_configs_per_frequency() {
        assert_eq!(
            Frequency::Monthly.default_config(),
            FrequencyConfig::new(36, vec![6, 12, 18])
        );
        assert_eq!(
            Frequency::Weekly.default_config(),
            FrequencyConfig::new(96, vec![12, 24, 36])
        );
        assert_eq!(
            Frequency::Daily.default_config(),
            FrequencyConfig::new(336, vec![48, 96, 192])
        );
    }

    #[test]
    fn text_record_intersection_rule() {
        let span = (ts(5), ts(10));
        let inside = TextRecord::new(ts(6), ts(7), "a", None).unwrap();
        let straddle = TextRecord::new(ts(3), ts(5), "b", None).unwrap();
        let after = TextRecord::new(ts(11), ts(12), "c", None).unwrap();
        assert!(inside.intersects(span));
        assert!(straddle.intersects(span));
        assert!(!after.intersects(span));
    }
}

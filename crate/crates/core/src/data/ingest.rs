//! File ingestion: series CSV (`timestamp,value`) and texts JSONL
//! (`start`, `end`, `body`, `source`).

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::Deserialize;

use super::{Frequency, TextRecord, TimeSeries};
use crate::error::{Error, Result};

/// Parse an ISO-8601 instant. Accepts RFC 3339, `YYYY-MM-DDTHH:MM:SS`,
/// `YYYY-MM-DD HH:MM:SS`, and bare dates (midnight).
pub fn parse_instant(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap());
    }
    Err(Error::data(format!("unparseable timestamp `{s}`")))
}

#[derive(Deserialize)]
struct RawText {
    start: String,
    end: String,
    body: String,
    #[serde(default)]
    source: Option<String>,
}

/// Load a series CSV and its texts JSONL. Rows may arrive out of order;
/// the result is timestamp-sorted. Duplicate timestamps, unparseable rows
/// and non-finite values are rejected with the offending location.
pub fn load_dataset(
    series_path: impl AsRef<Path>,
    texts_path: impl AsRef<Path>,
    domain: &str,
    frequency: Frequency,
) -> Result<(TimeSeries, Vec<TextRecord>)> {
    let series = load_series(series_path, domain, frequency)?;
    let texts = load_texts(texts_path)?;
    Ok((series, texts))
}

pub(crate) fn load_series(
    path: impl AsRef<Path>,
    domain: &str,
    frequency: Frequency,
) -> Result<TimeSeries> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open series file {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("bad CSV header: {e}")))?
        .clone();
    if headers.len() < 2 || &headers[0] != "timestamp" || &headers[1] != "value" {
        return Err(Error::data(format!(
            "series CSV must start with header `timestamp,value`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut rows: Vec<(NaiveDateTime, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("unparseable CSV row: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() < 2 {
            return Err(Error::data(format!("line {line}: expected 2 fields")));
        }
        let instant = parse_instant(&record[0])
            .map_err(|e| Error::data(format!("line {line}: {e}")))?;
        let value: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("line {line}: unparseable value `{}`", &record[1])))?;
        if !value.is_finite() {
            return Err(Error::data(format!(
                "line {line}: non-finite value `{}`",
                &record[1]
            )));
        }
        rows.push((instant, value));
    }

    rows.sort_by_key(|(t, _)| *t);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::data(format!("duplicate timestamp {}", w[0].0)));
        }
    }

    let (timestamps, values): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    TimeSeries::new(domain, frequency, timestamps, values)
}

pub(crate) fn load_texts(path: impl AsRef<Path>) -> Result<Vec<TextRecord>> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open texts file {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawText = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("line {}: invalid text record: {e}", i + 1)))?;
        let start = parse_instant(&raw.start)
            .map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        let end = parse_instant(&raw.end)
            .map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        let record = TextRecord::new(start, end, raw.body, raw.source)
            .map_err(|e| Error::data(format!("line {}: {e}", i + 1)))?;
        records.push(record);
    }
    records.sort_by_key(|r| (r.start, r.end));
    Ok(records)
}

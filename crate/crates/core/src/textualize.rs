//! Textualization of numeric windows: fixed-precision serialization, the
//! statistical descriptor block, and generator prompt assembly.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::data::{Frequency, TextRecord};
use crate::error::{Error, Result};

/// Default instruction appended as the final prompt section.
pub const DEFAULT_TASK_PROMPT: &str = "Making predictions based on the information above.";

/// Placeholder used when a window carries no accompanying text.
pub const MISSING_TEXT_SENTINEL: &str = "No accompanying text is available.";

/// Separator line between concatenated original texts.
const TEXT_SEPARATOR: &str = "---";

/// Lowercased alphanumeric tokens; everything else separates. Shared by
/// the relevance reward, the toy language model, and the forecaster's
/// text embedding.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Render a value with exactly four fractional digits, truncated toward
/// zero. Operates on the shortest decimal representation so values that
/// already carry four digits reproduce verbatim; `-0.0000` normalizes to
/// `0.0000`.
pub fn truncate4(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::data(format!("cannot serialize non-finite value {x}")));
    }
    let repr = format!("{x}");
    let (int_part, frac_part) = if let Some(exp_pos) = repr.find(['e', 'E']) {
        // Display switched to scientific notation: the value is either far
        // below the representable precision or has no fractional digits.
        let _ = exp_pos;
        if x.abs() < 1.0 {
            ("0".to_string(), String::new())
        } else {
            (format!("{x:.0}"), String::new())
        }
    } else {
        match repr.split_once('.') {
            Some((i, f)) => (i.to_string(), f.to_string()),
            None => (repr, String::new()),
        }
    };
    let mut frac: String = frac_part.chars().take(4).collect();
    while frac.len() < 4 {
        frac.push('0');
    }
    let out = format!("{int_part}.{frac}");
    if out == "-0.0000" {
        Ok("0.0000".to_string())
    } else {
        Ok(out)
    }
}

/// Fixed-precision text for a whole lookback plus its descriptor block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedSeries {
    pub s_txt: String,
    pub a_txt: String,
}

impl SerializedSeries {
    pub fn new(lookback: &[f64], meta: &SeriesMeta) -> Result<Self> {
        Ok(SerializedSeries {
            s_txt: serialize_series(lookback)?,
            a_txt: describe_series(lookback, meta)?,
        })
    }
}

/// Metadata shown in the descriptor block.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub frequency: Frequency,
    pub span: (NaiveDateTime, NaiveDateTime),
}

/// Space-separated fixed-precision rendering of the lookback.
pub fn serialize_series(lookback: &[f64]) -> Result<String> {
    if lookback.is_empty() {
        return Err(Error::data("cannot serialize an empty lookback"));
    }
    let tokens: Result<Vec<String>> = lookback.iter().map(|&v| truncate4(v)).collect();
    Ok(tokens?.join(" "))
}

/// Descriptor lines for the lookback. Statistics are computed on the
/// truncated values (the ones the generator actually sees) with the
/// population variance, and displayed with the same four-digit truncation.
pub fn describe_series(lookback: &[f64], meta: &SeriesMeta) -> Result<String> {
    if lookback.is_empty() {
        return Err(Error::data("cannot describe an empty lookback"));
    }
    let truncated: Vec<f64> = lookback
        .iter()
        .map(|&v| Ok(truncate4(v)?.parse::<f64>().expect("truncate4 emits valid decimals")))
        .collect::<Result<_>>()?;
    let n = truncated.len() as f64;
    let mean = truncated.iter().sum::<f64>() / n;
    let var = truncated.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let min = truncated.iter().copied().fold(f64::INFINITY, f64::min);
    let max = truncated.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fmt = |v: f64| truncate4(v).expect("stats over finite values are finite");
    Ok(format!(
        "Mean: {}, Variance: {}\nMin: {}, Max: {}\nCount: {}\nFrequency: {}\nSpan: {} to {}",
        fmt(mean),
        fmt(var),
        fmt(min),
        fmt(max),
        truncated.len(),
        meta.frequency.as_str(),
        meta.span.0.format("%Y-%m-%d %H:%M:%S"),
        meta.span.1.format("%Y-%m-%d %H:%M:%S"),
    ))
}

/// The assembled generator input: four sections in fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub s_txt: String,
    pub a_txt: String,
    pub original_text: String,
    pub task_prompt: String,
    pub rendered: String,
}

/// Compose the generator prompt: serialized series, descriptor block,
/// original texts in start order (or the missing-text sentinel), then the
/// task instruction, separated by blank lines.
pub fn assemble_prompt(
    s_txt: &str,
    a_txt: &str,
    original_texts: &[TextRecord],
    task_prompt: &str,
) -> Result<Prompt> {
    if task_prompt.is_empty() {
        return Err(Error::config("task prompt must be non-empty"));
    }
    let mut texts: Vec<&TextRecord> = original_texts.iter().filter(|t| !t.body.is_empty()).collect();
    texts.sort_by_key(|t| (t.start, t.end));
    let original_text = if texts.is_empty() {
        MISSING_TEXT_SENTINEL.to_string()
    } else {
        texts
            .iter()
            .map(|t| t.body.as_str())
            .collect::<Vec<_>>()
            .join(&format!("\n{TEXT_SEPARATOR}\n"))
    };
    let rendered = format!("{s_txt}\n\n{a_txt}\n\n{original_text}\n\n{task_prompt}");
    Ok(Prompt {
        s_txt: s_txt.to_string(),
        a_txt: a_txt.to_string(),
        original_text,
        task_prompt: task_prompt.to_string(),
        rendered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn meta() -> SeriesMeta {
        let start = NaiveDate::from_ymd_opt(2020, 1, 31)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let end = NaiveDate::from_ymd_opt(2020, 3, 31)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        SeriesMeta {
            frequency: Frequency::Monthly,
            span: (start, end),
        }
    }

    #[test]
    fn truncates_toward_zero_not_rounds() {
        assert_eq!(truncate4(0.38298721).unwrap(), "0.3829");
    }

    #[test]
    fn pads_integers() {
        assert_eq!(truncate4(2.0).unwrap(), "2.0000");
    }

    #[test]
    fn normalizes_negative_zero() {
        assert_eq!(truncate4(-0.00004).unwrap(), "0.0000");
    }

    #[test]
    fn negative_values_truncate_toward_zero() {
        assert_eq!(truncate4(-1.23456).unwrap(), "-1.2345");
        assert_eq!(truncate4(-1.5).unwrap(), "-1.5000");
    }

    #[test]
    fn non_finite_rejected() {
        assert!(truncate4(f64::NAN).is_err());
        assert!(truncate4(f64::INFINITY).is_err());
    }

    #[test]
    fn serializes_reference_window() {
        let s = serialize_series(&[0.12931496, 0.38298721, 0.31423577]).unwrap();
        assert_eq!(s, "0.1293 0.3829 0.3142");
    }

    #[test]
    fn serializes_singleton() {
        assert_eq!(serialize_series(&[1.0]).unwrap(), "1.0000");
    }

    #[test]
    fn empty_lookback_rejected() {
        assert!(serialize_series(&[]).is_err());
    }

    #[test]
    fn describe_reference_window() {
        let a = describe_series(&[0.12931496, 0.38298721, 0.31423577], &meta()).unwrap();
        assert!(a.contains("Mean: 0.2754, Variance: 0.0114"), "{a}");
        assert!(a.contains("Min: 0.1293, Max: 0.3829"), "{a}");
        assert!(a.contains("Count: 3"), "{a}");
        assert!(a.contains("Frequency: monthly"), "{a}");
    }

    #[test]
    fn describe_constant_series_zero_variance() {
        let a = describe_series(&[0.7, 0.7, 0.7], &meta()).unwrap();
        assert!(a.contains("Variance: 0.0000"), "{a}");
    }

    #[test]
    fn describe_zero_one() {
        let a = describe_series(&[0.0, 1.0], &meta()).unwrap();
        assert!(a.contains("Mean: 0.5000, Variance: 0.2500"), "{a}");
    }

    fn record(day: u32, body: &str) -> TextRecord {
        let t = NaiveDate::from_ymd_opt(2020, 1, day)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        TextRecord::new(t, t, body, None).unwrap()
    }

    #[test]
    fn prompt_orders_texts_by_start() {
        let p = assemble_prompt(
            "0.1000",
            "Mean: 0.1000",
            &[record(5, "second"), record(1, "first")],
            DEFAULT_TASK_PROMPT,
        )
        .unwrap();
        assert_eq!(p.original_text, "first\n---\nsecond");
        let sections: Vec<&str> = p.rendered.split("\n\n").collect();
        assert_eq!(sections.len(), 4);
        assert_eq!(sections[3], DEFAULT_TASK_PROMPT);
    }

    #[test]
    fn prompt_inserts_sentinel_when_no_text() {
        let p = assemble_prompt("0.1000", "Mean: 0.1000", &[], DEFAULT_TASK_PROMPT).unwrap();
        assert_eq!(p.original_text, MISSING_TEXT_SENTINEL);
    }

    #[test]
    fn task_prompt_is_last_section() {
        let p = assemble_prompt("1.0000", "Count: 1", &[record(1, "t")], DEFAULT_TASK_PROMPT)
            .unwrap();
        assert!(p.rendered.ends_with(DEFAULT_TASK_PROMPT));
    }

    #[test]
    fn empty_task_prompt_rejected() {
        assert!(assemble_prompt("1.0000", "a", &[], "").is_err());
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(
            tokenize("An upward-Trend, with 2 peaks!"),
            vec!["an", "upward", "trend", "with", "2", "peaks"]
        );
    }

    proptest! {
        #[test]
        fn truncate4_idempotent(x in -1e9f64..1e9) {
            let once = truncate4(x).unwrap();
            let parsed: f64 = once.parse().unwrap();
            prop_assert_eq!(truncate4(parsed).unwrap(), once);
        }

        #[test]
        fn truncate4_shape(x in -1e9f64..1e9) {
            let s = truncate4(x).unwrap();
            let (_, frac) = s.split_once('.').unwrap();
            prop_assert_eq!(frac.len(), 4);
            prop_assert!(frac.chars().all(|c| c.is_ascii_digit()));
            // Truncation moves toward zero by less than 1e-4.
            let parsed: f64 = s.parse().unwrap();
            prop_assert!(parsed.abs() <= x.abs() + 1e-12);
            prop_assert!((x - parsed).abs() < 1e-4 + x.abs() * 1e-12);
        }

        #[test]
        fn serialization_token_count_matches(values in proptest::collection::vec(-1e4f64..1e4, 1..80)) {
            let s = serialize_series(&values).unwrap();
            prop_assert_eq!(s.split(' ').count(), values.len());
        }

        #[test]
        fn serialization_round_trip(values in proptest::collection::vec(-1e4f64..1e4, 1..40)) {
            // Parsing s_txt recovers exactly the truncated lookback values.
            let s = serialize_series(&values).unwrap();
            let parsed: Vec<f64> = s.split(' ').map(|t| t.parse().unwrap()).collect();
            let truncated: Vec<f64> = values
                .iter()
                .map(|&v| truncate4(v).unwrap().parse().unwrap())
                .collect();
            prop_assert_eq!(parsed, truncated);
        }

        #[test]
        fn describe_depends_only_on_truncated_values(values in proptest::collection::vec(-1e4f64..1e4, 1..40)) {
            let truncated: Vec<f64> = values
                .iter()
                .map(|&v| truncate4(v).unwrap().parse().unwrap())
                .collect();
            let a = describe_series(&values, &meta()).unwrap();
            let b = describe_series(&truncated, &meta()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn prompt_injective_on_single_line_sections(
            s1 in "[a-z0-9 .]{1,20}", s2 in "[a-z0-9 .]{1,20}",
            a1 in "[a-z0-9 .]{1,20}", a2 in "[a-z0-9 .]{1,20}",
        ) {
            let p1 = assemble_prompt(&s1, &a1, &[], DEFAULT_TASK_PROMPT).unwrap();
            let p2 = assemble_prompt(&s2, &a2, &[], DEFAULT_TASK_PROMPT).unwrap();
            if s1 != s2 || a1 != a2 {
                prop_assert_ne!(p1.rendered, p2.rendered);
            } else {
                prop_assert_eq!(p1.rendered, p2.rendered);
            }
        }
    }
}

//! Sliding-window sample construction and lookback-span text attachment.

use super::{Sample, SplitTag, TextRecord, TimeSeries};

/// Cut `(lookback, horizon)` windows from a contiguous segment. The window
/// count is `max(0, floor((N - L - H) / stride) + 1)`; short segments
/// yield an empty list.
pub fn make_windows(
    segment: &TimeSeries,
    lookback: usize,
    horizon: usize,
    stride: usize,
    tag: SplitTag,
) -> Vec<Sample> {
    assert!(lookback >= 1 && horizon >= 1 && stride >= 1);
    let n = segment.len();
    if n < lookback + horizon {
        return Vec::new();
    }
    let count = (n - lookback - horizon) / stride + 1;
    let mut samples = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride;
        let lb_end = start + lookback;
        samples.push(Sample {
            id: format!("{}-{}-{}", segment.domain, tag.as_str(), start),
            split: tag,
            lookback: segment.values[start..lb_end].to_vec(),
            horizon_truth: segment.values[lb_end..lb_end + horizon].to_vec(),
            lookback_span: (segment.timestamps[start], segment.timestamps[lb_end - 1]),
            texts: Vec::new(),
        });
    }
    samples
}

/// Attach every record whose interval intersects the sample's lookback
/// span, in start order. Records that touch only the horizon span are
/// excluded so no future text leaks into the input.
pub fn attach_texts(mut sample: Sample, records: &[TextRecord]) -> Sample {
    debug_assert!(records.windows(2).all(|w| w[0].start <= w[1].start));
    sample.texts = records
        .iter()
        .filter(|r| r.intersects(sample.lookback_span))
        .cloned()
        .collect();
    sample
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Frequency;
    use chrono::{Duration, NaiveDate, NaiveDateTime};
    use proptest::prelude::*;

    fn day(i: usize) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
            + Duration::days(i as i64)
    }

    fn segment(n: usize) -> TimeSeries {
        TimeSeries::new(
            "d",
            Frequency::Daily,
            (0..n).map(day).collect(),
            (0..n).map(|i| i as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn window_count_50_36_6() {
        let windows = make_windows(&segment(50), 36, 6, 1, SplitTag::Train);
        assert_eq!(windows.len(), 9);
    }

    #[test]
    fn too_short_segment_yields_empty() {
        assert!(make_windows(&segment(41), 36, 6, 1, SplitTag::Train).is_empty());
    }

    #[test]
    fn horizon_follows_lookback() {
        let windows = make_windows(&segment(20), 5, 3, 2, SplitTag::Train);
        for w in &windows {
            let last_lb = *w.lookback.last().unwrap();
            assert_eq!(w.horizon_truth[0], last_lb + 1.0);
            assert_eq!(w.lookback.len(), 5);
            assert_eq!(w.horizon_truth.len(), 3);
        }
    }

    #[test]
    fn attach_by_intersection() {
        let windows = make_windows(&segment(20), 5, 3, 1, SplitTag::Train);
        let w = windows[0].clone(); // lookback days 0..=4
        let records = vec![
            TextRecord::new(day(1), day(2), "inside", None).unwrap(),
            TextRecord::new(day(3), day(6), "straddles", None).unwrap(),
            TextRecord::new(day(5), day(6), "horizon only", None).unwrap(),
        ];
        let w = attach_texts(w, &records);
        let bodies: Vec<&str> = w.texts.iter().map(|t| t.body.as_str()).collect();
        assert_eq!(bodies, vec!["inside", "straddles"]);
    }

    #[test]
    fn record_starting_after_lookback_end_is_excluded() {
        let windows = make_windows(&segment(20), 5, 3, 1, SplitTag::Test);
        let w = windows[0].clone();
        let records = vec![TextRecord::new(day(10), day(12), "future", None).unwrap()];
        let w = attach_texts(w, &records);
        assert!(w.texts.is_empty());
    }

    proptest! {
        #[test]
        fn window_count_formula(
            n in 1usize..300,
            l in 1usize..40,
            h in 1usize..20,
            stride in 1usize..10,
        ) {
            let windows = make_windows(&segment(n), l, h, stride, SplitTag::Train);
            let expected = if n < l + h { 0 } else { (n - l - h) / stride + 1 };
            prop_assert_eq!(windows.len(), expected);
        }

        #[test]
        fn attached_texts_always_intersect_lookback(
            starts in proptest::collection::vec(0usize..40, 0..12),
        ) {
            let mut records: Vec<TextRecord> = starts
                .iter()
                .map(|&s| TextRecord::new(day(s), day(s + 2), "t", None).unwrap())
                .collect();
            records.sort_by_key(|r| r.start);
            let windows = make_windows(&segment(40), 8, 4, 3, SplitTag::Train);
            for w in windows {
                let w = attach_texts(w, &records);
                for t in &w.texts {
                    prop_assert!(t.intersects(w.lookback_span));
                    prop_assert!(t.start <= w.lookback_span.1, "no horizon-only text");
                }
            }
        }
    }
}

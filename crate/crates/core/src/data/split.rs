//! Chronological splitting and train-statistics z-normalization.

use super::{NormStats, TimeSeries};
use crate::error::{Error, Result};

/// Split a series into contiguous train/val/test segments. Sizes are
/// `floor(r_train * N)` and `floor(r_val * N)` with the remainder going to
/// test, so the split is deterministic and order-preserving.
pub fn chronological_split(
    series: &TimeSeries,
    ratios: (f64, f64, f64),
) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    let (rt, rv, rs) = ratios;
    if !(rt > 0.0 && rv > 0.0 && rs > 0.0) {
        return Err(Error::config("split ratios must all be positive"));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios must sum to 1, got {}",
            rt + rv + rs
        )));
    }
    let n = series.len();
    if n < 10 {
        return Err(Error::data(format!(
            "series of length {n} is too short to split"
        )));
    }
    let n_train = (rt * n as f64).floor() as usize;
    let n_val = (rv * n as f64).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::data(format!(
            "split {n_train}/{n_val}/{n_test} leaves an empty segment"
        )));
    }
    let train = series.slice(0..n_train);
    let val = series.slice(n_train..n_train + n_val);
    let test = series.slice(n_train + n_val..n);
    Ok((train, val, test))
}

/// Fit normalization statistics (mean, population std) on the training
/// segment. A constant segment is a hard error.
pub fn znorm_fit(train: &TimeSeries) -> Result<NormStats> {
    let values = &train.values;
    if values.len() < 2 {
        return Err(Error::data("normalization needs at least 2 points"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(Error::data("constant series: cannot normalize (std = 0)"));
    }
    Ok(NormStats { mean, std })
}

pub fn znorm_apply(values: &[f64], stats: &NormStats) -> Vec<f64> {
    values.iter().map(|v| (v - stats.mean) / stats.std).collect()
}

pub fn znorm_invert(values: &[f64], stats: &NormStats) -> Vec<f64> {
    values.iter().map(|v| v * stats.std + stats.mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Frequency;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> TimeSeries {
        let timestamps = (0..values.len())
            .map(|i| {
                NaiveDate::from_ymd_opt(2020, 1, 1)
                    .unwrap()
                    .and_hms_opt(0, 0, 0)
                    .unwrap()
                    + chrono::Duration::days(i as i64)
            })
            .collect();
        TimeSeries::new("d", Frequency::Daily, timestamps, values).unwrap()
    }

    #[test]
    fn split_100_is_70_10_20() {
        let s = series((0..100).map(|i| i as f64).collect());
        let (tr, va, te) = chronological_split(&s, (0.7, 0.1, 0.2)).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (70, 10, 20));
    }

    #[test]
    fn split_10_is_7_1_2() {
        let s = series((0..10).map(|i| i as f64).collect());
        let (tr, va, te) = chronological_split(&s, (0.7, 0.1, 0.2)).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (7, 1, 2));
    }

    #[test]
    fn split_12_is_8_1_3() {
        let s = series((0..12).map(|i| i as f64).collect());
        let (tr, va, te) = chronological_split(&s, (0.7, 0.1, 0.2)).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 3));
    }

    #[test]
    fn split_too_short_errors() {
        let s = series((0..9).map(|i| i as f64).collect());
        assert!(chronological_split(&s, (0.7, 0.1, 0.2)).is_err());
    }

    #[test]
    fn split_is_ordered_partition() {
        let s = series((0..53).map(|i| (i as f64).sin()).collect());
        let (tr, va, te) = chronological_split(&s, (0.7, 0.1, 0.2)).unwrap();
        let mut rebuilt = tr.values.clone();
        rebuilt.extend(&va.values);
        rebuilt.extend(&te.values);
        assert_eq!(rebuilt, s.values);
        assert!(tr.timestamps.last().unwrap() < &va.timestamps[0]);
        assert!(va.timestamps.last().unwrap() < &te.timestamps[0]);
    }

    #[test]
    fn znorm_1_2_3() {
        let s = series(vec![1.0, 2.0, 3.0]);
        let stats = znorm_fit(&s).unwrap();
        assert!((stats.mean - 2.0).abs() < 1e-15);
        assert!((stats.std - 0.816497).abs() < 1e-6);
        let normed = znorm_apply(&s.values, &stats);
        assert!((normed[0] - (-1.224745)).abs() < 1e-6);
        assert!(normed[1].abs() < 1e-12);
        assert!((normed[2] - 1.224745).abs() < 1e-6);
    }

    #[test]
    fn znorm_constant_errors() {
        let s = series(vec![5.0, 5.0, 5.0]);
        let err = znorm_fit(&s).unwrap_err();
        assert!(err.to_string().contains("constant series"), "{err}");
    }

    #[test]
    fn znorm_train_stats_have_zero_mean_unit_std() {
        let s = series((0..40).map(|i| 3.0 + (i as f64 * 0.7).cos()).collect());
        let stats = znorm_fit(&s).unwrap();
        let normed = znorm_apply(&s.values, &stats);
        let n = normed.len() as f64;
        let mean = normed.iter().sum::<f64>() / n;
        let var = normed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn znorm_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 2..60)) {
            prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-6));
            let s = series(values.clone());
            let stats = znorm_fit(&s).unwrap();
            let back = znorm_invert(&znorm_apply(&values, &stats), &stats);
            for (a, b) in values.iter().zip(&back) {
                let scale = a.abs().max(1.0);
                prop_assert!((a - b).abs() / scale <= 1e-12);
            }
        }

        #[test]
        fn split_partition_property(n in 10usize..400) {
            let s = series((0..n).map(|i| i as f64).collect());
            let (tr, va, te) = chronological_split(&s, (0.7, 0.1, 0.2)).unwrap();
            prop_assert_eq!(tr.len(), (0.7 * n as f64).floor() as usize);
            prop_assert_eq!(va.len(), (0.1 * n as f64).floor() as usize);
            prop_assert_eq!(tr.len() + va.len() + te.len(), n);
        }
    }
}

//! Run reports: the full JSON structure plus CSV projections, written
//! byte-deterministically.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{BackendKind, Mode, PipelineConfig};

/// Forecast-quality metrics in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

/// One refinement round's statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub mean_best_reward: f64,
    pub pairs: usize,
    pub skipped: usize,
}

/// Per-horizon results with the reward trajectory over rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    pub rounds: Vec<RoundSummary>,
}

/// Full run report. The averaged metrics are the arithmetic mean of the
/// per-horizon metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub domain: String,
    pub mode: Mode,
    pub backend: BackendKind,
    pub seed: u64,
    pub units: String,
    pub avg_mse: f64,
    pub avg_mae: f64,
    pub horizons: Vec<HorizonReport>,
    pub config: PipelineConfig,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::data(format!("serialize report: {e}")))
    }

    pub fn from_json(json: &str) -> Result<Report> {
        serde_json::from_str(json).map_err(|e| Error::data(format!("parse report: {e}")))
    }
}

/// Write `report.json`, `metrics.csv` (domain, mode, horizon, mse, mae;
/// one row per horizon plus an `avg` row), and `rewards.csv` (horizon,
/// round, mean_best_reward, pairs, skipped). Returns the paths written.
pub fn emit_report(report: &Report, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;

    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, report.to_json()?)?;

    let metrics_path = out_dir.join("metrics.csv");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
        writeln!(f, "domain,mode,horizon,mse,mae")?;
        for h in &report.horizons {
            writeln!(
                f,
                "{},{},{},{},{}",
                report.domain,
                report.mode.as_str(),
                h.horizon,
                h.mse,
                h.mae
            )?;
        }
        writeln!(
            f,
            "{},{},avg,{},{}",
            report.domain,
            report.mode.as_str(),
            report.avg_mse,
            report.avg_mae
        )?;
        f.flush()?;
    }

    let rewards_path = out_dir.join("rewards.csv");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&rewards_path)?);
        writeln!(f, "horizon,round,mean_best_reward,pairs,skipped")?;
        for h in &report.horizons {
            for r in &h.rounds {
                writeln!(
                    f,
                    "{},{},{},{},{}",
                    h.horizon, r.round, r.mean_best_reward, r.pairs, r.skipped
                )?;
            }
        }
        f.flush()?;
    }

    Ok(vec![report_path, metrics_path, rewards_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> Report {
        let horizons = vec![
            HorizonReport {
                horizon: 6,
                mse: 0.5,
                mae: 0.4,
                rounds: vec![RoundSummary {
                    round: 1,
                    mean_best_reward: 0.25,
                    pairs: 7,
                    skipped: 1,
                }],
            },
            HorizonReport {
                horizon: 12,
                mse: 0.7,
                mae: 0.6,
                rounds: vec![],
            },
            HorizonReport {
                horizon: 18,
                mse: 0.9,
                mae: 0.8,
                rounds: vec![],
            },
        ];
        Report {
            domain: "demo".into(),
            mode: Mode::TsfTerR12,
            backend: BackendKind::Toy,
            seed: 1,
            units: "normalized".into(),
            avg_mse: (0.5 + 0.7 + 0.9) / 3.0,
            avg_mae: (0.4 + 0.6 + 0.8) / 3.0,
            horizons,
            config: PipelineConfig::default(),
        }
    }

    #[test]
    fn averaged_metrics_are_horizon_means() {
        let r = report();
        let mean_mse = r.horizons.iter().map(|h| h.mse).sum::<f64>() / r.horizons.len() as f64;
        assert_eq!(r.avg_mse, mean_mse);
    }

    #[test]
    fn csv_shape_three_horizons_plus_average() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report(), dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let lines: Vec<&str> = metrics.lines().collect();
        assert_eq!(lines.len(), 5); // header + 3 horizons + avg
        assert_eq!(lines[0], "domain,mode,horizon,mse,mae");
        assert!(lines[4].starts_with("demo,tsf_ter_r12,avg,"));
        let rewards = std::fs::read_to_string(dir.path().join("rewards.csv")).unwrap();
        assert_eq!(rewards.lines().count(), 2); // header + 1 round row
    }

    #[test]
    fn rewriting_same_report_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let r = report();
        emit_report(&r, dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("report.json")).unwrap();
        emit_report(&r, dir.path()).unwrap();
        let second = std::fs::read(dir.path().join("report.json")).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn report_json_round_trip() {
        let r = report();
        let parsed = Report::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(parsed, r);
    }
}

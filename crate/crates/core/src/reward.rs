//! Dual reward: forecast-accuracy (negative MSE) and keyword relevance,
//! their weighted combination, and best/worst candidate ranking.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::CandidateText;
use crate::textualize::tokenize;

/// Built-in keyword set: the usual vocabulary of temporal dynamics.
pub const DEFAULT_KEYWORDS: &[&str] = &[
    "peak",
    "fluctuation",
    "seasonality",
    "trend",
    "anomaly",
    "volatility",
    "cycle",
    "spike",
    "drift",
    "upward",
    "downward",
    "stable",
    "increase",
    "decrease",
];

/// How keyword hits are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// Every occurrence counts, including repeats; the score may exceed 1.
    #[default]
    Occurrences,
    /// Each keyword counts at most once (coverage variant).
    Distinct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub w1: f64,
    pub w2: f64,
    /// Lowercase phrases, one or more tokens each.
    pub keywords: Vec<String>,
    pub count_mode: CountMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            w1: 1.0,
            w2: 1.0,
            keywords: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            count_mode: CountMode::Occurrences,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.w1.is_finite() || !self.w2.is_finite() {
            return Err(Error::config("reward weights must be finite"));
        }
        if self.keywords.is_empty() {
            return Err(Error::config("keyword set must be non-empty"));
        }
        let mut seen = BTreeSet::new();
        for k in &self.keywords {
            if k.trim().is_empty() {
                return Err(Error::config("empty keyword phrase"));
            }
            if !seen.insert(k.as_str()) {
                return Err(Error::config(format!("duplicate keyword phrase `{k}`")));
            }
        }
        Ok(())
    }
}

/// Load a keyword file: UTF-8, one lowercase phrase per line, `#` comments
/// and blank lines ignored.
pub fn load_keywords(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let content = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::data(format!("cannot read keyword file: {e}")))?;
    let mut keywords = Vec::new();
    for line in content.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        keywords.push(line.to_lowercase());
    }
    if keywords.is_empty() {
        return Err(Error::data("keyword file contains no phrases"));
    }
    Ok(keywords)
}

/// Accuracy reward: negative mean squared error between truth and
/// prediction. Zero iff the forecast is perfect, negative otherwise.
pub fn reward_accuracy(truth: &[f64], prediction: &[f64]) -> Result<f64> {
    if truth.is_empty() || truth.len() != prediction.len() {
        return Err(Error::data(format!(
            "reward_accuracy length mismatch: {} vs {}",
            truth.len(),
            prediction.len()
        )));
    }
    let sse: f64 = truth
        .iter()
        .zip(prediction)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok(-sse / truth.len() as f64)
}

/// Relevance reward: keyword occurrences (multi-token phrases matched by
/// sliding window, repeats counted individually) normalized by the size of
/// the keyword set.
pub fn reward_relevance(text: &str, keywords: &[String]) -> f64 {
    count_hits(text, keywords, CountMode::Occurrences) / keywords.len() as f64
}

/// Relevance reward honoring the configured counting mode.
pub fn reward_relevance_with(text: &str, cfg: &RewardConfig) -> f64 {
    count_hits(text, &cfg.keywords, cfg.count_mode) / cfg.keywords.len() as f64
}

fn count_hits(text: &str, keywords: &[String], mode: CountMode) -> f64 {
    let tokens = tokenize(text);
    let mut total = 0usize;
    for phrase in keywords {
        let phrase_tokens = tokenize(phrase);
        if phrase_tokens.is_empty() || phrase_tokens.len() > tokens.len() {
            continue;
        }
        let occurrences = tokens
            .windows(phrase_tokens.len())
            .filter(|w| w.iter().zip(&phrase_tokens).all(|(a, b)| a == b))
            .count();
        match mode {
            CountMode::Occurrences => total += occurrences,
            CountMode::Distinct => total += usize::from(occurrences > 0),
        }
    }
    total as f64
}

/// Weighted combination of the two reward terms.
pub fn combine(r1: f64, r2: f64, cfg: &RewardConfig) -> f64 {
    cfg.w1 * r1 + cfg.w2 * r2
}

/// A candidate with its reward breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: CandidateText,
    pub r1: f64,
    pub r2: f64,
    pub r: f64,
}

impl ScoredCandidate {
    pub fn new(candidate: CandidateText, r1: f64, r2: f64, cfg: &RewardConfig) -> Self {
        let r = combine(r1, r2, cfg);
        ScoredCandidate { candidate, r1, r2, r }
    }
}

/// Outcome of ranking a candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ranking {
    /// Indices of the best and worst candidates (ties broken by the lowest
    /// generation index).
    Pair { best: usize, worst: usize },
    /// All rewards equal; no preference pair can be formed.
    Degenerate,
}

/// Select the highest- and lowest-reward candidates. Requires at least two
/// candidates; an all-equal reward list is reported as degenerate.
pub fn rank_candidates(scored: &[ScoredCandidate]) -> Result<Ranking> {
    if scored.len() < 2 {
        return Err(Error::data(format!(
            "ranking needs at least 2 candidates, got {}",
            scored.len()
        )));
    }
    let mut best = 0usize;
    let mut worst = 0usize;
    for (i, c) in scored.iter().enumerate().skip(1) {
        if c.r > scored[best].r {
            best = i;
        }
        if c.r < scored[worst].r {
            worst = i;
        }
    }
    if scored[best].r == scored[worst].r {
        return Ok(Ranking::Degenerate);
    }
    Ok(Ranking::Pair { best, worst })
}

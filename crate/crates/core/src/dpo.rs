//! Preference-pair construction, preference scoring, and direct
//! preference optimization of the toy language model, plus JSONL export
//! for external trainers.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::ToyLm;
use crate::numerics::{log_sigmoid, sigmoid, softmax};
use crate::reward::{Ranking, ScoredCandidate};

/// A (prompt, chosen, rejected) preference pair with its reward breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub reward_chosen: f64,
    pub reward_rejected: f64,
    pub sample_id: String,
    pub round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpoConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub steps_per_round: usize,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            beta: 0.1,
            learning_rate: 5e-5,
            steps_per_round: 50,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::config("beta must be positive"));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::config("learning rate must be non-negative"));
        }
        Ok(())
    }
}

/// Ranked scoring results for one sample, the input to pair construction.
#[derive(Debug, Clone)]
pub struct SampleRanking {
    pub sample_id: String,
    pub prompt: String,
    pub scored: Vec<ScoredCandidate>,
    pub ranking: Ranking,
}

/// Build one preference pair per non-degenerate sample ranking. Returns
/// the pairs and the count of skipped (degenerate) samples.
pub fn build_pairs(rankings: &[SampleRanking], round: usize) -> (Vec<PreferencePair>, usize) {
    let mut pairs = Vec::new();
    let mut skipped = 0usize;
    for ranking in rankings {
        match ranking.ranking {
            Ranking::Degenerate => skipped += 1,
            Ranking::Pair { best, worst } => {
                let chosen = &ranking.scored[best];
                let rejected = &ranking.scored[worst];
                if chosen.candidate.body == rejected.candidate.body {
                    // Identical texts cannot carry distinct rewards; guard anyway.
                    skipped += 1;
                    continue;
                }
                pairs.push(PreferencePair {
                    prompt: ranking.prompt.clone(),
                    chosen: chosen.candidate.body.clone(),
                    rejected: rejected.candidate.body.clone(),
                    reward_chosen: chosen.r,
                    reward_rejected: rejected.r,
                    sample_id: ranking.sample_id.clone(),
                    round,
                });
            }
        }
    }
    (pairs, skipped)
}

/// Literal preference score of a reward pair:
/// `log[exp(beta r+) / (exp(beta r+) + exp(beta r-))] = log sigmoid(beta (r+ - r-))`,
/// computed in the stable log-sigmoid form. Exposed as a diagnostic.
pub fn preference_score(r_plus: f64, r_minus: f64, beta: f64) -> f64 {
    assert!(beta > 0.0, "beta must be positive");
    log_sigmoid(beta * (r_plus - r_minus))
}

fn margin(policy: &ToyLm, reference: &ToyLm, pair: &PreferencePair) -> Result<f64> {
    let chosen = policy.encode(&pair.chosen)?;
    let rejected = policy.encode(&pair.rejected)?;
    let pol = policy.log_prob_ids(&chosen)? - policy.log_prob_ids(&rejected)?;
    let reference_chosen = reference.encode(&pair.chosen)?;
    let reference_rejected = reference.encode(&pair.rejected)?;
    let anchor =
        reference.log_prob_ids(&reference_chosen)? - reference.log_prob_ids(&reference_rejected)?;
    Ok(pol - anchor)
}

/// Policy log-probability gap `log pi(chosen) - log pi(rejected)`; the
/// quantity preference training should widen.
pub fn policy_margin(policy: &ToyLm, pair: &PreferencePair) -> Result<f64> {
    let chosen = policy.encode(&pair.chosen)?;
    let rejected = policy.encode(&pair.rejected)?;
    Ok(policy.log_prob_ids(&chosen)? - policy.log_prob_ids(&rejected)?)
}

/// DPO loss for one pair:
/// `-log sigmoid(beta [(log pi(y+) - log pi_ref(y+)) - (log pi(y-) - log pi_ref(y-))])`.
/// Equals `ln 2` when the policy matches the reference.
pub fn dpo_loss(
    policy: &ToyLm,
    reference: &ToyLm,
    pair: &PreferencePair,
    beta: f64,
) -> Result<f64> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::config("beta must be positive"));
    }
    Ok(-log_sigmoid(beta * margin(policy, reference, pair)?))
}

/// Gradients of the mean DPO loss with respect to the policy logits.
#[derive(Debug, Clone)]
pub struct ToyLmGrads {
    pub start: Array1<f64>,
    pub bigram: Array2<f64>,
}

impl ToyLmGrads {
    fn zeros(vocab_size: usize) -> Self {
        ToyLmGrads {
            start: Array1::zeros(vocab_size),
            bigram: Array2::zeros((vocab_size, vocab_size)),
        }
    }

    fn is_finite(&self) -> bool {
        self.start.iter().all(|x| x.is_finite()) && self.bigram.iter().all(|x| x.is_finite())
    }
}

/// Accumulate `coef * d log pi(ids) / d logits` into `grads`.
fn accumulate_logprob_grad(policy: &ToyLm, ids: &[usize], coef: f64, grads: &mut ToyLmGrads) {
    let start_probs = softmax(policy.start_logits.as_slice().unwrap());
    for (j, &p) in start_probs.iter().enumerate() {
        let indicator = if j == ids[0] { 1.0 } else { 0.0 };
        grads.start[j] += coef * (indicator - p);
    }
    for w in ids.windows(2) {
        let row = policy.bigram_logits.row(w[0]);
        let probs = softmax(row.as_slice().unwrap());
        for (j, &p) in probs.iter().enumerate() {
            let indicator = if j == w[1] { 1.0 } else { 0.0 };
            grads.bigram[(w[0], j)] += coef * (indicator - p);
        }
    }
}

/// Mean DPO loss over a batch and its analytic gradient w.r.t. the policy
/// start and bigram logits. The reference model is a constant.
pub fn dpo_loss_and_grads(
    policy: &ToyLm,
    reference: &ToyLm,
    pairs: &[PreferencePair],
    beta: f64,
) -> Result<(f64, ToyLmGrads)> {
    if pairs.is_empty() {
        return Err(Error::data("DPO batch must be non-empty"));
    }
    let mut grads = ToyLmGrads::zeros(policy.vocab_size());
    let mut total_loss = 0.0;
    let scale = 1.0 / pairs.len() as f64;
    for pair in pairs {
        let m = margin(policy, reference, pair)?;
        total_loss += -log_sigmoid(beta * m);
        // d(-log sigmoid(beta m))/dm = -beta sigmoid(-beta m)
        let dm = -beta * sigmoid(-beta * m) * scale;
        let chosen = policy.encode(&pair.chosen)?;
        let rejected = policy.encode(&pair.rejected)?;
        accumulate_logprob_grad(policy, &chosen, dm, &mut grads);
        accumulate_logprob_grad(policy, &rejected, -dm, &mut grads);
    }
    Ok((total_loss * scale, grads))
}

/// One gradient-descent step on the mean DPO loss over `pairs`. Returns
/// the pre-step loss; the reference model is untouched.
pub fn dpo_step(
    policy: &mut ToyLm,
    reference: &ToyLm,
    pairs: &[PreferencePair],
    cfg: &DpoConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (loss, grads) = dpo_loss_and_grads(policy, reference, pairs, cfg.beta)?;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::data("non-finite DPO loss or gradient"));
    }
    policy
        .start_logits
        .iter_mut()
        .zip(grads.start.iter())
        .for_each(|(p, g)| *p -= cfg.learning_rate * g);
    policy
        .bigram_logits
        .iter_mut()
        .zip(grads.bigram.iter())
        .for_each(|(p, g)| *p -= cfg.learning_rate * g);
    Ok(loss)
}

/// Write pairs as JSONL with a stable field order. Returns the count
/// written.
pub fn export_pairs(pairs: &[PreferencePair], path: impl AsRef<Path>) -> Result<usize> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    for pair in pairs {
        let line = serde_json::to_string(pair)
            .map_err(|e| Error::data(format!("serialize preference pair: {e}")))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(pairs.len())
}

/// Read pairs back from JSONL.
pub fn import_pairs(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PreferencePair = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("line {}: invalid preference pair: {e}", i + 1)))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

//! Mini-batch gradient-descent training with validation-based early
//! stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{forecast_loss, loss_and_grads};
use super::{ForecasterConfig, ForecasterGrads, ForecasterParams, TextMode, Vocab};
use crate::data::SplitTag;
use crate::error::{Error, Result};
use crate::numerics::derive_seed;

/// One training (or evaluation) example with its resolved text source.
/// `text: None` means the numeric-only path; `Some("")` is an empty text
/// that maps to the dedicated empty-text vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub lookback: Vec<f64>,
    pub truth: Vec<f64>,
    pub text: Option<String>,
    pub split: SplitTag,
}

impl TrainExample {
    pub fn text_as_deref(&self) -> Option<&str> {
        self.text.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub optimizer: OptimizerKind,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            steps: 400,
            batch_size: 32,
            eval_every: 20,
            patience: 8,
            optimizer: OptimizerKind::Adam,
            grad_clip: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::config("learning rate must be finite and non-negative"));
        }
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::config("steps, batch_size and eval_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub initial_train_mse: f64,
    pub final_train_mse: f64,
    pub best_val_mse: Option<f64>,
    pub steps_run: usize,
}

struct Adam {
    m: ForecasterGrads,
    v: ForecasterGrads,
    t: usize,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(template: &ForecasterParams) -> Self {
        Adam {
            m: ForecasterGrads::zeros_like(template),
            v: ForecasterGrads::zeros_like(template),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut ForecasterParams, grads: &ForecasterGrads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

fn sgd_step(params: &mut ForecasterParams, grads: &ForecasterGrads, lr: f64) {
    for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
        for i in 0..p.len() {
            p[i] -= lr * g[i];
        }
    }
}

fn clip_grads(grads: &mut ForecasterGrads, max_norm: f64) {
    let norm_sq: f64 = grads
        .slices()
        .iter()
        .map(|s| s.iter().map(|g| g * g).sum::<f64>())
        .sum();
    let norm = norm_sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for s in grads.slices_mut() {
            for g in s.iter_mut() {
                *g *= scale;
            }
        }
    }
}

fn mean_mse(
    cfg: &ForecasterConfig,
    params: &ForecasterParams,
    examples: &[TrainExample],
) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += forecast_loss(cfg, params, ex)?;
    }
    Ok(total / examples.len() as f64)
}

fn check_examples(cfg: &ForecasterConfig, examples: &[TrainExample], role: &str) -> Result<()> {
    for ex in examples {
        if ex.split == SplitTag::Test {
            return Err(Error::data(format!(
                "{role} set contains a test-split sample; refusing to train on leaked data"
            )));
        }
        if ex.lookback.len() != cfg.lookback_len || ex.truth.len() != cfg.horizon {
            return Err(Error::data(format!(
                "{role} example shape mismatch: lookback {} truth {}",
                ex.lookback.len(),
                ex.truth.len()
            )));
        }
        if cfg.text_mode == TextMode::None && ex.text.is_some() {
            return Err(Error::config(
                "numeric-only mode must not receive text inputs",
            ));
        }
        if cfg.text_mode != TextMode::None && ex.text.is_none() {
            return Err(Error::config("text mode requires a text for every example"));
        }
    }
    Ok(())
}

/// Train a fresh forecaster from a seeded initialization. Runs mini-batch
/// gradient descent on the mean squared error, evaluating the validation
/// set every `eval_every` steps; returns the parameters with the best
/// validation MSE (or the final ones when `val` is empty). Divergence is
/// an error.
pub fn train_forecaster(
    train: &[TrainExample],
    val: &[TrainExample],
    cfg: &ForecasterConfig,
    tcfg: &TrainConfig,
    vocab: Vocab,
    seed: u64,
) -> Result<(ForecasterParams, TrainStats)> {
    cfg.validate()?;
    let params = ForecasterParams::init(cfg, vocab, seed)?;
    train_loop(train, val, cfg, tcfg, params, seed)
}

/// Warm-start variant: continue from existing parameters instead of a
/// fresh initialization.
pub fn train_forecaster_with_init(
    train: &[TrainExample],
    val: &[TrainExample],
    cfg: &ForecasterConfig,
    tcfg: &TrainConfig,
    init: ForecasterParams,
) -> Result<(ForecasterParams, TrainStats)> {
    cfg.validate()?;
    let shuffle_seed = 0;
    train_loop(train, val, cfg, tcfg, init, shuffle_seed)
}

fn train_loop(
    train: &[TrainExample],
    val: &[TrainExample],
    cfg: &ForecasterConfig,
    tcfg: &TrainConfig,
    mut params: ForecasterParams,
    seed: u64,
) -> Result<(ForecasterParams, TrainStats)> {
    tcfg.validate()?;
    if train.is_empty() {
        return Err(Error::data("training set must be non-empty"));
    }
    check_examples(cfg, train, "train")?;
    check_examples(cfg, val, "validation")?;

    let mut optimizer = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));

    let initial_train_mse = mean_mse(cfg, &params, train)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;

    let mut best_val: Option<(f64, ForecasterParams)> = None;
    let mut evals_since_best = 0usize;
    let mut steps_run = 0usize;

    for step in 0..tcfg.steps {
        let mut batch: Vec<&TrainExample> = Vec::with_capacity(tcfg.batch_size);
        for _ in 0..tcfg.batch_size.min(train.len()) {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&train[order[cursor]]);
            cursor += 1;
        }
        let (loss, mut grads) = loss_and_grads(cfg, &params, &batch)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::data(format!(
                "training diverged at step {step}: non-finite loss or gradient"
            )));
        }
        if let Some(max_norm) = tcfg.grad_clip {
            clip_grads(&mut grads, max_norm);
        }
        match tcfg.optimizer {
            OptimizerKind::Adam => optimizer.step(&mut params, &grads, tcfg.learning_rate),
            OptimizerKind::Sgd => sgd_step(&mut params, &grads, tcfg.learning_rate),
        }
        if !params.all_finite() {
            return Err(Error::data(format!(
                "training diverged at step {step}: non-finite parameters"
            )));
        }
        steps_run = step + 1;

        if !val.is_empty() && steps_run.is_multiple_of(tcfg.eval_every) {
            let val_mse = mean_mse(cfg, &params, val)?;
            let improved = best_val.as_ref().is_none_or(|(best, _)| val_mse < *best);
            if improved {
                best_val = Some((val_mse, params.clone()));
                evals_since_best = 0;
            } else {
                evals_since_best += 1;
                if evals_since_best > tcfg.patience {
                    break;
                }
            }
        }
    }

    let (best_val_mse, final_params) = match best_val {
        Some((mse, p)) => (Some(mse), p),
        None => (None, params),
    };
    let final_train_mse = mean_mse(cfg, &final_params, train)?;
    Ok((
        final_params,
        TrainStats {
            initial_train_mse,
            final_train_mse,
            best_val_mse,
            steps_run,
        },
    ))
}

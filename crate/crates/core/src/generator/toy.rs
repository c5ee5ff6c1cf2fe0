//! Bigram-with-softmax toy language model: exact log-probabilities,
//! seeded ancestral sampling, and closed-form gradients for preference
//! optimization.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CandidateText, GenerationRequest, GeneratorBackend};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, log_softmax, softmax};
use crate::textualize::tokenize;

/// Default vocabulary: half filler, half temporal-dynamics terms, so the
/// keyword reward has room to move under preference training.
pub const DEFAULT_TOY_VOCAB: &[&str] = &[
    "the", "series", "shows", "a", "steady", "level", "noise", "period", "trend", "peak",
    "fluctuation", "seasonality", "anomaly", "spike", "drift", "cycle",
];

/// A bigram language model over a fixed token vocabulary. Conditional
/// distributions are softmaxes of the stored logits, so every sequence
/// probability is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLm {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    pub start_logits: Array1<f64>,
    pub bigram_logits: Array2<f64>,
}

impl ToyLm {
    pub fn new(
        vocab: Vec<String>,
        start_logits: Array1<f64>,
        bigram_logits: Array2<f64>,
    ) -> Result<Self> {
        let v = vocab.len();
        if v == 0 {
            return Err(Error::config("toy LM vocabulary must be non-empty"));
        }
        if start_logits.len() != v || bigram_logits.dim() != (v, v) {
            return Err(Error::config(format!(
                "toy LM logit shapes must match vocabulary size {v}"
            )));
        }
        if start_logits.iter().any(|x| !x.is_finite())
            || bigram_logits.iter().any(|x| !x.is_finite())
        {
            return Err(Error::config("toy LM logits must be finite"));
        }
        let index: HashMap<String, usize> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != v {
            return Err(Error::config("toy LM vocabulary contains duplicates"));
        }
        Ok(ToyLm {
            vocab,
            index,
            start_logits,
            bigram_logits,
        })
    }

    /// Uniform model: every conditional is 1/|V|.
    pub fn uniform(vocab: Vec<String>) -> Result<Self> {
        let v = vocab.len();
        ToyLm::new(vocab, Array1::zeros(v), Array2::zeros((v, v)))
    }

    /// Random logits ~ N(0, scale), seeded.
    pub fn seeded(vocab: Vec<String>, seed: u64, scale: f64) -> Result<Self> {
        let v = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).map_err(|e| Error::config(e.to_string()))?;
        let start = Array1::from_iter((0..v).map(|_| normal.sample(&mut rng)));
        let bigram =
            Array2::from_shape_fn((v, v), |_| normal.sample(&mut rng));
        ToyLm::new(vocab, start, bigram)
    }

    pub fn default_vocab() -> Vec<String> {
        DEFAULT_TOY_VOCAB.iter().map(|s| s.to_string()).collect()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Tokenize and map to ids; unknown tokens are an error.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        tokenize(text)
            .iter()
            .map(|t| {
                self.index
                    .get(t)
                    .copied()
                    .ok_or_else(|| Error::data(format!("token `{t}` not in toy LM vocabulary")))
            })
            .collect()
    }

    /// Exact log-probability of a token-id sequence: start log-softmax for
    /// the first token plus bigram conditional log-softmax terms.
    pub fn log_prob_ids(&self, ids: &[usize]) -> Result<f64> {
        if ids.is_empty() {
            return Err(Error::data("sequence must contain at least one token"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab.len()) {
            return Err(Error::data(format!("token id {bad} out of range")));
        }
        let start_lsm = log_softmax(self.start_logits.as_slice().unwrap());
        let mut total = start_lsm[ids[0]];
        for w in ids.windows(2) {
            let row = self.bigram_logits.row(w[0]);
            let lsm = log_softmax(row.as_slice().unwrap());
            total += lsm[w[1]];
        }
        Ok(total)
    }

    pub fn log_prob_text(&self, text: &str) -> Result<f64> {
        self.log_prob_ids(&self.encode(text)?)
    }

    /// Seeded ancestral sampling at temperature 1.
    pub fn sample_ids(&self, length: usize, seed: u64) -> Vec<usize> {
        self.sample_ids_with_temperature(length, seed, 1.0)
    }

    /// Temperature-scaled ancestral sampling; temperature 0 is greedy.
    pub fn sample_ids_with_temperature(&self, length: usize, seed: u64, temp: f64) -> Vec<usize> {
        assert!(length >= 1, "sample length must be at least 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(length);
        let mut logits: Vec<f64> = self.start_logits.to_vec();
        for _ in 0..length {
            let next = if temp == 0.0 {
                argmax(&logits)
            } else {
                let scaled: Vec<f64> = logits.iter().map(|l| l / temp).collect();
                sample_categorical(&softmax(&scaled), &mut rng)
            };
            out.push(next);
            logits = self.bigram_logits.row(next).to_vec();
        }
        out
    }

    pub fn sample_text(&self, length: usize, seed: u64) -> String {
        self.decode(&self.sample_ids(length, seed))
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.vocab[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let saved = SavedToyLm {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            vocab: self.vocab.clone(),
            start_logits: self.start_logits.to_vec(),
            bigram_logits: self
                .bigram_logits
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        };
        let json = serde_json::to_string_pretty(&saved)
            .map_err(|e| Error::data(format!("serialize toy LM: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let saved: SavedToyLm = serde_json::from_str(&content)
            .map_err(|e| Error::data(format!("parse toy LM checkpoint: {e}")))?;
        if saved.format != CHECKPOINT_FORMAT || saved.version != 1 {
            return Err(Error::data(format!(
                "unsupported toy LM checkpoint `{}` v{}",
                saved.format, saved.version
            )));
        }
        let v = saved.vocab.len();
        let mut bigram = Array2::zeros((v, v));
        if saved.bigram_logits.len() != v {
            return Err(Error::data("bigram logit row count mismatch"));
        }
        for (i, row) in saved.bigram_logits.iter().enumerate() {
            if row.len() != v {
                return Err(Error::data("bigram logit column count mismatch"));
            }
            for (j, &x) in row.iter().enumerate() {
                bigram[(i, j)] = x;
            }
        }
        ToyLm::new(saved.vocab, Array1::from_vec(saved.start_logits), bigram)
    }
}

const CHECKPOINT_FORMAT: &str = "ter-toy-lm";

#[derive(Serialize, Deserialize)]
struct SavedToyLm {
    format: String,
    version: u32,
    vocab: Vec<String>,
    start_logits: Vec<f64>,
    bigram_logits: Vec<Vec<f64>>,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Exact sequence log-probability over whitespace/punctuation tokens.
pub fn toy_lm_logprob(model: &ToyLm, tokens: &[&str]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::data("sequence must contain at least one token"));
    }
    let ids: Result<Vec<usize>> = tokens
        .iter()
        .map(|t| {
            model
                .index
                .get(*t)
                .copied()
                .ok_or_else(|| Error::data(format!("token `{t}` not in toy LM vocabulary")))
        })
        .collect();
    model.log_prob_ids(&ids?)
}

/// Seeded ancestral sample of `length` tokens.
pub fn toy_lm_sample(model: &ToyLm, length: usize, seed: u64) -> Vec<String> {
    model
        .sample_ids(length, seed)
        .iter()
        .map(|&i| model.vocab[i].clone())
        .collect()
}

/// Generator backend view over a toy LM.
pub struct ToyLmBackend<'a> {
    model: &'a ToyLm,
}

impl<'a> ToyLmBackend<'a> {
    pub fn new(model: &'a ToyLm) -> Self {
        ToyLmBackend { model }
    }
}

impl GeneratorBackend for ToyLmBackend<'_> {
    fn id(&self) -> &str {
        "toy"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<CandidateText>> {
        request.validate()?;
        Ok((0..request.k)
            .map(|i| {
                let seed = derive_seed(request.seed, &[i as u64]);
                let ids = self.model.sample_ids_with_temperature(
                    request.max_tokens,
                    seed,
                    request.temperature,
                );
                CandidateText {
                    body: self.model.decode(&ids),
                    backend_id: self.id().to_string(),
                    generation_index: i,
                }
            })
            .collect())
    }

    fn vocabulary_hint(&self) -> Vec<String> {
        self.model.vocab.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_token_model() -> ToyLm {
        // Conditionals for logits (0, ln 3) are (0.25, 0.75).
        let logits = vec![0.0, 3f64.ln()];
        ToyLm::new(
            vec!["a".into(), "b".into()],
            Array1::from_vec(logits.clone()),
            Array2::from_shape_vec((2, 2), [logits.clone(), logits].concat()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_logprob() {
        let model = ToyLm::uniform(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        let lp = toy_lm_logprob(&model, &["a", "b", "c"]).unwrap();
        assert!((lp - 3.0 * (0.25f64).ln()).abs() < 1e-12);
        assert!((lp - (-4.158883)).abs() < 1e-6);
    }

    #[test]
    fn single_token_uniform_start() {
        let model = ToyLm::uniform(vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        let lp = toy_lm_logprob(&model, &["c"]).unwrap();
        assert!((lp - (0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_built_conditionals() {
        let model = two_token_model();
        let lp = toy_lm_logprob(&model, &["b"]).unwrap();
        assert!((lp - 0.75f64.ln()).abs() < 1e-12);
        // P(a then b) = 0.25 * 0.75
        let lp2 = toy_lm_logprob(&model, &["a", "b"]).unwrap();
        assert!((lp2 - (0.25f64.ln() + 0.75f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn oov_token_is_error() {
        let model = two_token_model();
        assert!(toy_lm_logprob(&model, &["z"]).is_err());
        assert!(model.encode("a z").is_err());
    }

    #[test]
    fn logprob_nonpositive_and_monotone_in_logits() {
        let mut model = two_token_model();
        let before = toy_lm_logprob(&model, &["a", "b"]).unwrap();
        assert!(before <= 0.0);
        // Raising the logit of every realized transition raises the logprob.
        model.start_logits[0] += 0.5;
        model.bigram_logits[(0, 1)] += 0.5;
        let after = toy_lm_logprob(&model, &["a", "b"]).unwrap();
        assert!(after > before);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let model = ToyLm::seeded(ToyLm::default_vocab(), 11, 1.0).unwrap();
        assert_eq!(model.sample_ids(8, 42), model.sample_ids(8, 42));
        assert_ne!(model.sample_ids(8, 42), model.sample_ids(8, 43));
    }

    #[test]
    fn degenerate_logits_sample_constant_sequence() {
        let mut model = ToyLm::uniform(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        model.start_logits[1] = 60.0;
        for j in 0..3 {
            model.bigram_logits[(j, 1)] = 60.0;
        }
        let ids = model.sample_ids(10, 5);
        assert!(ids.iter().all(|&i| i == 1));
    }

    #[test]
    fn empirical_frequencies_match_softmax() {
        let model = two_token_model();
        let expected = softmax(&[0.0, 3f64.ln()]); // (0.25, 0.75)
        let n = 10_000;
        let mut counts = [0usize; 2];
        for s in 0..n {
            counts[model.sample_ids(1, s as u64)[0]] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - expected[i]).abs() < 0.02,
                "token {i}: freq {freq} vs {}",
                expected[i]
            );
        }
    }

    #[test]
    fn backend_returns_exactly_k() {
        let model = ToyLm::seeded(ToyLm::default_vocab(), 3, 1.0).unwrap();
        let backend = ToyLmBackend::new(&model);
        let out = backend.generate(&GenerationRequest::new("p", 4, 9)).unwrap();
        assert_eq!(out.len(), 4);
        let again = backend.generate(&GenerationRequest::new("p", 4, 9)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = ToyLm::seeded(ToyLm::default_vocab(), 17, 0.8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.json");
        model.save(&path).unwrap();
        let loaded = ToyLm::load(&path).unwrap();
        assert_eq!(model, loaded);
    }
}

//! Compact multimodal forecaster: patch encoder over the lookback, a
//! learned text-embedding table with mean pooling, single-query multi-head
//! cross-attention fusion, and a feedforward head. All arithmetic is f64
//! with hand-derived gradients verified against finite differences.

mod gradcheck;
mod model;
mod train;
mod vocab;

pub use gradcheck::{fd_gradient_at, grad_check, FD_STEP};
pub use model::{
    cross_attend, cross_attention_weights, embed_and_pool, forecast_loss, loss_and_grads,
    patch_encode, predict, predict_with_text,
};
pub use train::{
    train_forecaster, train_forecaster_with_init, OptimizerKind, TrainConfig, TrainExample,
    TrainStats,
};
pub use vocab::Vocab;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where the forecaster's text input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextMode {
    /// Numeric-only: the text path is skipped and the head consumes the
    /// mean-pooled patch representation.
    None,
    /// Original accompanying texts.
    Raw,
    /// Generated reinforced text supplied per prediction.
    #[default]
    Reinforced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecasterConfig {
    pub lookback_len: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub model_dim: usize,
    pub encoder_layers: usize,
    pub attention_heads: usize,
    pub head_hidden: usize,
    pub horizon: usize,
    pub text_mode: TextMode,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig {
            lookback_len: 36,
            patch_len: 16,
            stride: 8,
            model_dim: 64,
            encoder_layers: 2,
            attention_heads: 4,
            head_hidden: 64,
            horizon: 6,
            text_mode: TextMode::Reinforced,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_len == 0 || self.stride == 0 || self.model_dim == 0 {
            return Err(Error::config("patch_len, stride and model_dim must be positive"));
        }
        if self.patch_len > self.lookback_len {
            return Err(Error::config(format!(
                "patch_len {} exceeds lookback length {}",
                self.patch_len, self.lookback_len
            )));
        }
        if self.attention_heads == 0 || !self.model_dim.is_multiple_of(self.attention_heads) {
            return Err(Error::config(format!(
                "model_dim {} must be divisible by attention_heads {}",
                self.model_dim, self.attention_heads
            )));
        }
        if self.encoder_layers == 0 || self.head_hidden == 0 || self.horizon == 0 {
            return Err(Error::config(
                "encoder_layers, head_hidden and horizon must be positive",
            ));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        (self.lookback_len - self.patch_len) / self.stride + 1
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.attention_heads
    }

    pub fn ffn_hidden(&self) -> usize {
        2 * self.model_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub ff_w1: Array2<f64>,
    pub ff_b1: Array1<f64>,
    pub ff_w2: Array2<f64>,
    pub ff_b2: Array1<f64>,
}

/// All learnable state plus the vocabulary that fixes the embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterParams {
    pub vocab: Vocab,
    pub patch_w: Array2<f64>,
    pub patch_b: Array1<f64>,
    pub pos: Array2<f64>,
    pub layers: Vec<EncoderLayerParams>,
    pub ln_f_g: Array1<f64>,
    pub ln_f_b: Array1<f64>,
    pub token_emb: Array2<f64>,
    pub empty_text: Array1<f64>,
    pub xq: Array2<f64>,
    pub xk: Array2<f64>,
    pub xv: Array2<f64>,
    pub xo: Array2<f64>,
    pub head_w1: Array2<f64>,
    pub head_b1: Array1<f64>,
    pub head_w2: Array2<f64>,
    pub head_b2: Array1<f64>,
}

impl ForecasterParams {
    /// Seeded random initialization: Xavier-style scales for projections,
    /// unit gains and zero biases for the layer norms.
    pub fn init(cfg: &ForecasterConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.model_dim;
        let p = cfg.num_patches();
        let ff = cfg.ffn_hidden();
        let normal = |rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng| {
            let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
            Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
        };
        let layers = (0..cfg.encoder_layers)
            .map(|_| EncoderLayerParams {
                wq: normal(d, d, d, &mut rng),
                wk: normal(d, d, d, &mut rng),
                wv: normal(d, d, d, &mut rng),
                wo: normal(d, d, d, &mut rng),
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                ff_w1: normal(d, ff, d, &mut rng),
                ff_b1: Array1::zeros(ff),
                ff_w2: normal(ff, d, ff, &mut rng),
                ff_b2: Array1::zeros(d),
            })
            .collect();
        let pos_dist = Normal::new(0.0, 0.02).unwrap();
        Ok(ForecasterParams {
            patch_w: normal(cfg.patch_len, d, cfg.patch_len, &mut rng),
            patch_b: Array1::zeros(d),
            pos: Array2::from_shape_fn((p, d), |_| pos_dist.sample(&mut rng)),
            layers,
            ln_f_g: Array1::ones(d),
            ln_f_b: Array1::zeros(d),
            token_emb: {
                let dist = Normal::new(0.0, 0.4).unwrap();
                Array2::from_shape_fn((vocab.embedding_rows(), d), |_| dist.sample(&mut rng))
            },
            empty_text: {
                let dist = Normal::new(0.0, 0.1).unwrap();
                Array1::from_shape_fn(d, |_| dist.sample(&mut rng))
            },
            xq: normal(d, d, d, &mut rng),
            xk: normal(d, d, d, &mut rng),
            xv: normal(d, d, d, &mut rng),
            xo: normal(d, d, d, &mut rng),
            head_w1: normal(d, cfg.head_hidden, d, &mut rng),
            head_b1: Array1::zeros(cfg.head_hidden),
            head_w2: normal(cfg.head_hidden, cfg.horizon, cfg.head_hidden, &mut rng),
            head_b2: Array1::zeros(cfg.horizon),
            vocab,
        })
    }

    /// All-zero parameters with the same shapes; useful as a gradient
    /// template and in linearity tests.
    pub fn zeros(cfg: &ForecasterConfig, vocab: Vocab) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        let p = cfg.num_patches();
        let ff = cfg.ffn_hidden();
        let layers = (0..cfg.encoder_layers)
            .map(|_| EncoderLayerParams {
                wq: Array2::zeros((d, d)),
                wk: Array2::zeros((d, d)),
                wv: Array2::zeros((d, d)),
                wo: Array2::zeros((d, d)),
                ln1_g: Array1::zeros(d),
                ln1_b: Array1::zeros(d),
                ln2_g: Array1::zeros(d),
                ln2_b: Array1::zeros(d),
                ff_w1: Array2::zeros((d, ff)),
                ff_b1: Array1::zeros(ff),
                ff_w2: Array2::zeros((ff, d)),
                ff_b2: Array1::zeros(d),
            })
            .collect();
        Ok(ForecasterParams {
            patch_w: Array2::zeros((cfg.patch_len, d)),
            patch_b: Array1::zeros(d),
            pos: Array2::zeros((p, d)),
            layers,
            ln_f_g: Array1::zeros(d),
            ln_f_b: Array1::zeros(d),
            token_emb: Array2::zeros((vocab.embedding_rows(), d)),
            empty_text: Array1::zeros(d),
            xq: Array2::zeros((d, d)),
            xk: Array2::zeros((d, d)),
            xv: Array2::zeros((d, d)),
            xo: Array2::zeros((d, d)),
            head_w1: Array2::zeros((d, cfg.head_hidden)),
            head_b1: Array1::zeros(cfg.head_hidden),
            head_w2: Array2::zeros((cfg.head_hidden, cfg.horizon)),
            head_b2: Array1::zeros(cfg.horizon),
            vocab,
        })
    }

    /// Flat parameter views in declaration order. The same order is used by
    /// gradients, the optimizer, finite-difference checks, and checkpoints.
    pub fn named_slices(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("patch_w".into(), self.patch_w.as_slice().unwrap()),
            ("patch_b".into(), self.patch_b.as_slice().unwrap()),
            ("pos".into(), self.pos.as_slice().unwrap()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.wq"), l.wq.as_slice().unwrap()));
            out.push((format!("layer{i}.wk"), l.wk.as_slice().unwrap()));
            out.push((format!("layer{i}.wv"), l.wv.as_slice().unwrap()));
            out.push((format!("layer{i}.wo"), l.wo.as_slice().unwrap()));
            out.push((format!("layer{i}.ln1_g"), l.ln1_g.as_slice().unwrap()));
            out.push((format!("layer{i}.ln1_b"), l.ln1_b.as_slice().unwrap()));
            out.push((format!("layer{i}.ln2_g"), l.ln2_g.as_slice().unwrap()));
            out.push((format!("layer{i}.ln2_b"), l.ln2_b.as_slice().unwrap()));
            out.push((format!("layer{i}.ff_w1"), l.ff_w1.as_slice().unwrap()));
            out.push((format!("layer{i}.ff_b1"), l.ff_b1.as_slice().unwrap()));
            out.push((format!("layer{i}.ff_w2"), l.ff_w2.as_slice().unwrap()));
            out.push((format!("layer{i}.ff_b2"), l.ff_b2.as_slice().unwrap()));
        }
        out.push(("ln_f_g".into(), self.ln_f_g.as_slice().unwrap()));
        out.push(("ln_f_b".into(), self.ln_f_b.as_slice().unwrap()));
        out.push(("token_emb".into(), self.token_emb.as_slice().unwrap()));
        out.push(("empty_text".into(), self.empty_text.as_slice().unwrap()));
        out.push(("xq".into(), self.xq.as_slice().unwrap()));
        out.push(("xk".into(), self.xk.as_slice().unwrap()));
        out.push(("xv".into(), self.xv.as_slice().unwrap()));
        out.push(("xo".into(), self.xo.as_slice().unwrap()));
        out.push(("head_w1".into(), self.head_w1.as_slice().unwrap()));
        out.push(("head_b1".into(), self.head_b1.as_slice().unwrap()));
        out.push(("head_w2".into(), self.head_w2.as_slice().unwrap()));
        out.push(("head_b2".into(), self.head_b2.as_slice().unwrap()));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.patch_w.as_slice_mut().unwrap(),
            self.patch_b.as_slice_mut().unwrap(),
            self.pos.as_slice_mut().unwrap(),
        ];
        for l in self.layers.iter_mut() {
            out.push(l.wq.as_slice_mut().unwrap());
            out.push(l.wk.as_slice_mut().unwrap());
            out.push(l.wv.as_slice_mut().unwrap());
            out.push(l.wo.as_slice_mut().unwrap());
            out.push(l.ln1_g.as_slice_mut().unwrap());
            out.push(l.ln1_b.as_slice_mut().unwrap());
            out.push(l.ln2_g.as_slice_mut().unwrap());
            out.push(l.ln2_b.as_slice_mut().unwrap());
            out.push(l.ff_w1.as_slice_mut().unwrap());
            out.push(l.ff_b1.as_slice_mut().unwrap());
            out.push(l.ff_w2.as_slice_mut().unwrap());
            out.push(l.ff_b2.as_slice_mut().unwrap());
        }
        out.push(self.ln_f_g.as_slice_mut().unwrap());
        out.push(self.ln_f_b.as_slice_mut().unwrap());
        out.push(self.token_emb.as_slice_mut().unwrap());
        out.push(self.empty_text.as_slice_mut().unwrap());
        out.push(self.xq.as_slice_mut().unwrap());
        out.push(self.xk.as_slice_mut().unwrap());
        out.push(self.xv.as_slice_mut().unwrap());
        out.push(self.xo.as_slice_mut().unwrap());
        out.push(self.head_w1.as_slice_mut().unwrap());
        out.push(self.head_b1.as_slice_mut().unwrap());
        out.push(self.head_w2.as_slice_mut().unwrap());
        out.push(self.head_b2.as_slice_mut().unwrap());
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_slices().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_slices()
            .iter()
            .all(|(_, s)| s.iter().all(|x| x.is_finite()))
    }

    pub fn save(&self, cfg: &ForecasterConfig, path: impl AsRef<std::path::Path>) -> Result<()> {
        let saved = SavedForecaster {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            config: cfg.clone(),
            vocab: self.vocab.tokens().to_vec(),
            weights: self
                .named_slices()
                .into_iter()
                .map(|(name, data)| SavedArray {
                    name,
                    data: data.to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_string(&saved)
            .map_err(|e| Error::data(format!("serialize checkpoint: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<(ForecasterConfig, Self)> {
        let content = std::fs::read_to_string(path)?;
        let saved: SavedForecaster = serde_json::from_str(&content)
            .map_err(|e| Error::data(format!("parse checkpoint: {e}")))?;
        if saved.format != CHECKPOINT_FORMAT || saved.version != 1 {
            return Err(Error::data(format!(
                "unsupported checkpoint `{}` v{}",
                saved.format, saved.version
            )));
        }
        let vocab = Vocab::from_tokens(saved.vocab);
        let mut params = ForecasterParams::zeros(&saved.config, vocab)?;
        {
            let expected: Vec<String> = params.named_slices().into_iter().map(|(n, _)| n).collect();
            if expected.len() != saved.weights.len() {
                return Err(Error::data("checkpoint weight count mismatch"));
            }
            let mut slices = params.slices_mut();
            for ((slice, array), name) in slices.iter_mut().zip(&saved.weights).zip(&expected) {
                if &array.name != name {
                    return Err(Error::data(format!(
                        "checkpoint weight order mismatch: expected {name}, found {}",
                        array.name
                    )));
                }
                if slice.len() != array.data.len() {
                    return Err(Error::data(format!(
                        "checkpoint weight {} has {} values, expected {}",
                        array.name,
                        array.data.len(),
                        slice.len()
                    )));
                }
                slice.copy_from_slice(&array.data);
            }
        }
        Ok((saved.config, params))
    }
}

const CHECKPOINT_FORMAT: &str = "ter-forecaster";

#[derive(Serialize, Deserialize)]
struct SavedArray {
    name: String,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SavedForecaster {
    format: String,
    version: u32,
    config: ForecasterConfig,
    vocab: Vec<String>,
    weights: Vec<SavedArray>,
}

/// Gradients for every learnable array, mirroring [`ForecasterParams`].
#[derive(Debug, Clone)]
pub struct ForecasterGrads {
    pub patch_w: Array2<f64>,
    pub patch_b: Array1<f64>,
    pub pos: Array2<f64>,
    pub layers: Vec<EncoderLayerParams>,
    pub ln_f_g: Array1<f64>,
    pub ln_f_b: Array1<f64>,
    pub token_emb: Array2<f64>,
    pub empty_text: Array1<f64>,
    pub xq: Array2<f64>,
    pub xk: Array2<f64>,
    pub xv: Array2<f64>,
    pub xo: Array2<f64>,
    pub head_w1: Array2<f64>,
    pub head_b1: Array1<f64>,
    pub head_w2: Array2<f64>,
    pub head_b2: Array1<f64>,
}

impl ForecasterGrads {
    pub fn zeros_like(params: &ForecasterParams) -> Self {
        let zero1 = |a: &Array1<f64>| Array1::zeros(a.len());
        let zero2 = |a: &Array2<f64>| Array2::zeros(a.dim());
        ForecasterGrads {
            patch_w: zero2(&params.patch_w),
            patch_b: zero1(&params.patch_b),
            pos: zero2(&params.pos),
            layers: params
                .layers
                .iter()
                .map(|l| EncoderLayerParams {
                    wq: zero2(&l.wq),
                    wk: zero2(&l.wk),
                    wv: zero2(&l.wv),
                    wo: zero2(&l.wo),
                    ln1_g: zero1(&l.ln1_g),
                    ln1_b: zero1(&l.ln1_b),
                    ln2_g: zero1(&l.ln2_g),
                    ln2_b: zero1(&l.ln2_b),
                    ff_w1: zero2(&l.ff_w1),
                    ff_b1: zero1(&l.ff_b1),
                    ff_w2: zero2(&l.ff_w2),
                    ff_b2: zero1(&l.ff_b2),
                })
                .collect(),
            ln_f_g: zero1(&params.ln_f_g),
            ln_f_b: zero1(&params.ln_f_b),
            token_emb: zero2(&params.token_emb),
            empty_text: zero1(&params.empty_text),
            xq: zero2(&params.xq),
            xk: zero2(&params.xk),
            xv: zero2(&params.xv),
            xo: zero2(&params.xo),
            head_w1: zero2(&params.head_w1),
            head_b1: zero1(&params.head_b1),
            head_w2: zero2(&params.head_w2),
            head_b2: zero1(&params.head_b2),
        }
    }

    /// Flat gradient views in the same order as
    /// [`ForecasterParams::named_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.patch_w.as_slice().unwrap(),
            self.patch_b.as_slice().unwrap(),
            self.pos.as_slice().unwrap(),
        ];
        for l in &self.layers {
            out.push(l.wq.as_slice().unwrap());
            out.push(l.wk.as_slice().unwrap());
            out.push(l.wv.as_slice().unwrap());
            out.push(l.wo.as_slice().unwrap());
            out.push(l.ln1_g.as_slice().unwrap());
            out.push(l.ln1_b.as_slice().unwrap());
            out.push(l.ln2_g.as_slice().unwrap());
            out.push(l.ln2_b.as_slice().unwrap());
            out.push(l.ff_w1.as_slice().unwrap());
            out.push(l.ff_b1.as_slice().unwrap());
            out.push(l.ff_w2.as_slice().unwrap());
            out.push(l.ff_b2.as_slice().unwrap());
        }
        out.push(self.ln_f_g.as_slice().unwrap());
        out.push(self.ln_f_b.as_slice().unwrap());
        out.push(self.token_emb.as_slice().unwrap());
        out.push(self.empty_text.as_slice().unwrap());
        out.push(self.xq.as_slice().unwrap());
        out.push(self.xk.as_slice().unwrap());
        out.push(self.xv.as_slice().unwrap());
        out.push(self.xo.as_slice().unwrap());
        out.push(self.head_w1.as_slice().unwrap());
        out.push(self.head_b1.as_slice().unwrap());
        out.push(self.head_w2.as_slice().unwrap());
        out.push(self.head_b2.as_slice().unwrap());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.patch_w.as_slice_mut().unwrap(),
            self.patch_b.as_slice_mut().unwrap(),
            self.pos.as_slice_mut().unwrap(),
        ];
        for l in self.layers.iter_mut() {
            out.push(l.wq.as_slice_mut().unwrap());
            out.push(l.wk.as_slice_mut().unwrap());
            out.push(l.wv.as_slice_mut().unwrap());
            out.push(l.wo.as_slice_mut().unwrap());
            out.push(l.ln1_g.as_slice_mut().unwrap());
            out.push(l.ln1_b.as_slice_mut().unwrap());
            out.push(l.ln2_g.as_slice_mut().unwrap());
            out.push(l.ln2_b.as_slice_mut().unwrap());
            out.push(l.ff_w1.as_slice_mut().unwrap());
            out.push(l.ff_b1.as_slice_mut().unwrap());
            out.push(l.ff_w2.as_slice_mut().unwrap());
            out.push(l.ff_b2.as_slice_mut().unwrap());
        }
        out.push(self.ln_f_g.as_slice_mut().unwrap());
        out.push(self.ln_f_b.as_slice_mut().unwrap());
        out.push(self.token_emb.as_slice_mut().unwrap());
        out.push(self.empty_text.as_slice_mut().unwrap());
        out.push(self.xq.as_slice_mut().unwrap());
        out.push(self.xk.as_slice_mut().unwrap());
        out.push(self.xv.as_slice_mut().unwrap());
        out.push(self.xo.as_slice_mut().unwrap());
        out.push(self.head_w1.as_slice_mut().unwrap());
        out.push(self.head_b1.as_slice_mut().unwrap());
        out.push(self.head_w2.as_slice_mut().unwrap());
        out.push(self.head_b2.as_slice_mut().unwrap());
        out
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ForecasterConfig {
        ForecasterConfig {
            lookback_len: 16,
            patch_len: 8,
            stride: 4,
            model_dim: 8,
            encoder_layers: 1,
            attention_heads: 2,
            head_hidden: 8,
            horizon: 3,
            text_mode: TextMode::Reinforced,
        }
    }

    #[test]
    fn patch_count_examples() {
        let cfg = ForecasterConfig {
            lookback_len: 36,
            ..Default::default()
        };
        assert_eq!(cfg.num_patches(), 3);
        let exact = ForecasterConfig {
            lookback_len: 16,
            patch_len: 16,
            ..Default::default()
        };
        assert_eq!(exact.num_patches(), 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_cfg();
        assert!(cfg.validate().is_ok());
        cfg.patch_len = 99;
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.attention_heads = 3; // 8 % 3 != 0
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = small_cfg();
        let vocab = Vocab::build(["alpha beta"], &[]);
        let a = ForecasterParams::init(&cfg, vocab.clone(), 5).unwrap();
        let b = ForecasterParams::init(&cfg, vocab.clone(), 5).unwrap();
        let c = ForecasterParams::init(&cfg, vocab, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn grads_match_param_layout() {
        let cfg = small_cfg();
        let params =
            ForecasterParams::init(&cfg, Vocab::build(["alpha beta"], &[]), 1).unwrap();
        let grads = ForecasterGrads::zeros_like(&params);
        let p: Vec<usize> = params.named_slices().iter().map(|(_, s)| s.len()).collect();
        let g: Vec<usize> = grads.slices().iter().map(|s| s.len()).collect();
        assert_eq!(p, g);
        assert!(params.num_params() > 0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = small_cfg();
        let params =
            ForecasterParams::init(&cfg, Vocab::build(["alpha beta gamma"], &[]), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forecaster.json");
        params.save(&cfg, &path).unwrap();
        let (loaded_cfg, loaded) = ForecasterParams::load(&path).unwrap();
        assert_eq!(loaded_cfg, cfg);
        assert_eq!(loaded, params);
    }
}

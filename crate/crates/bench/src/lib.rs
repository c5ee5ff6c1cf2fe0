//! Shared fixtures for the benchmark targets.

use ter_tsf_core::data::SplitTag;
use ter_tsf_core::forecaster::{ForecasterConfig, ForecasterParams, TextMode, TrainExample, Vocab};
use ter_tsf_core::generator::ToyLm;

pub fn bench_lookback(len: usize) -> Vec<f64> {
    (0..len).map(|i| ((i as f64) * 0.37).sin() * 1.3).collect()
}

pub fn bench_forecaster() -> (ForecasterConfig, ForecasterParams) {
    let cfg = ForecasterConfig {
        lookback_len: 96,
        patch_len: 16,
        stride: 8,
        model_dim: 64,
        encoder_layers: 2,
        attention_heads: 4,
        head_hidden: 64,
        horizon: 24,
        text_mode: TextMode::Reinforced,
    };
    let vocab = Vocab::build(
        ["the series shows a steady upward trend with a sharp peak and mild seasonality"],
        &ToyLm::default_vocab(),
    );
    let params = ForecasterParams::init(&cfg, vocab, 7).unwrap();
    (cfg, params)
}

pub fn bench_example(cfg: &ForecasterConfig) -> TrainExample {
    TrainExample {
        lookback: bench_lookback(cfg.lookback_len),
        truth: (0..cfg.horizon).map(|i| (i as f64 * 0.11).cos()).collect(),
        text: Some("the series shows a steady upward trend with a sharp peak".to_string()),
        split: SplitTag::Train,
    }
}

//! End-to-end pipeline behavior: determinism, the ablation-mode lattice,
//! the no-leakage audit, degenerate rounds, and the remote export path.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use ter_tsf_core::data::{Dataset, SplitTag, TextRecord};
use ter_tsf_core::dpo::DpoConfig;
use ter_tsf_core::forecaster::{ForecasterParams, TrainConfig, TrainExample, Vocab};
use ter_tsf_core::generator::{BackendKind, CandidateText, GenerationRequest, GeneratorBackend};
use ter_tsf_core::pipeline::{
    emit_report, evaluate, run_pipeline, run_round, ForecasterHyper, Mode, PipelineConfig,
    RoundContext, RoundState, WindowConfig,
};
use ter_tsf_core::reward::RewardConfig;
use ter_tsf_core::synthetic::{text_signal_dataset, TextSignalConfig};
use ter_tsf_core::Result;

fn small_dataset(seed: u64) -> Dataset {
    text_signal_dataset(&TextSignalConfig {
        windows: 20,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn fast_config(seed: u64, mode: Mode, backend: BackendKind) -> PipelineConfig {
    PipelineConfig {
        rounds: 2,
        candidates_per_sample: 2,
        mode,
        backend,
        seed,
        window: WindowConfig {
            lookback: 24,
            horizons: vec![6],
            stride: 30,
        },
        dpo: DpoConfig {
            learning_rate: 0.3,
            steps_per_round: 20,
            ..Default::default()
        },
        forecaster: ForecasterHyper {
            patch_len: 8,
            stride: 8,
            model_dim: 8,
            encoder_layers: 1,
            attention_heads: 2,
            head_hidden: 16,
        },
        train: TrainConfig {
            steps: 30,
            batch_size: 8,
            eval_every: 10,
            patience: 3,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn identical_seeded_runs_are_byte_identical() {
    let ds = small_dataset(3);
    for backend in [BackendKind::Mock, BackendKind::Toy] {
        let cfg = fast_config(7, Mode::TsfTerR12, backend);
        let a = run_pipeline(&cfg, &ds).unwrap();
        let b = run_pipeline(&cfg, &ds).unwrap();
        assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
        assert_eq!(a.pairs, b.pairs);

        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        emit_report(&a.report, dir_a.path()).unwrap();
        emit_report(&b.report, dir_b.path()).unwrap();
        for name in ["report.json", "metrics.csv", "rewards.csv"] {
            let x = std::fs::read(dir_a.path().join(name)).unwrap();
            let y = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between identical runs");
        }
    }
}

#[test]
fn tsf_only_ignores_texts_entirely() {
    let ds = small_dataset(5);
    // Poison every text with keyword-dense garbage; a numeric-only run
    // must not notice.
    let poisoned_texts: Vec<TextRecord> = ds
        .texts
        .iter()
        .map(|t| {
            TextRecord::new(
                t.start,
                t.end,
                "POISON anomaly peak trend spike fluctuation seasonality",
                t.source.clone(),
            )
            .unwrap()
        })
        .collect();
    let poisoned = Dataset::new(ds.series.clone(), poisoned_texts);

    let cfg = fast_config(11, Mode::TsfOnly, BackendKind::Mock);
    let clean_run = run_pipeline(&cfg, &ds).unwrap();
    let poisoned_run = run_pipeline(&cfg, &poisoned).unwrap();
    assert_eq!(
        clean_run.report.to_json().unwrap(),
        poisoned_run.report.to_json().unwrap()
    );
}

#[test]
fn accuracy_only_and_dual_reward_modes_differ_only_in_w2() {
    let ds = small_dataset(9);
    let mut r12 = fast_config(13, Mode::TsfTerR12, BackendKind::Toy);
    r12.reward = RewardConfig {
        w2: 0.0,
        ..Default::default()
    };
    let mut r1 = fast_config(13, Mode::TsfTerR1, BackendKind::Toy);
    r1.reward = RewardConfig::default(); // w2 forced to zero by the mode

    let run_r12 = run_pipeline(&r12, &ds).unwrap();
    let run_r1 = run_pipeline(&r1, &ds).unwrap();
    assert_eq!(run_r12.report.horizons, run_r1.report.horizons);
    assert_eq!(run_r12.pairs, run_r1.pairs);
}

#[test]
fn test_split_never_reaches_generation_or_training() {
    let ds = small_dataset(17);
    // 20 windows of 30 points: train = blocks 0..13, val = block 13, the
    // rest is test. Poison only the test span (values and texts).
    let n = ds.series.len();
    let train_val_end = (0.8 * n as f64).floor() as usize;
    let mut poisoned_values = ds.series.values.clone();
    for v in poisoned_values.iter_mut().skip(train_val_end) {
        *v += 7.5;
    }
    let test_start_ts = ds.series.timestamps[train_val_end];
    let poisoned_texts: Vec<TextRecord> = ds
        .texts
        .iter()
        .map(|t| {
            if t.start >= test_start_ts {
                TextRecord::new(t.start, t.end, "anomaly peak trend spike cycle", t.source.clone())
                    .unwrap()
            } else {
                t.clone()
            }
        })
        .collect();
    let poisoned = Dataset::new(ds.series.with_values(poisoned_values), poisoned_texts);

    let cfg = fast_config(19, Mode::TsfTerR12, BackendKind::Toy);
    let clean_run = run_pipeline(&cfg, &ds).unwrap();
    let poisoned_run = run_pipeline(&cfg, &poisoned).unwrap();

    // Training-time artifacts are bit-identical: reward trajectories,
    // preference pairs, trained parameters, and the generator policy.
    assert_eq!(
        clean_run.report.horizons[0].rounds,
        poisoned_run.report.horizons[0].rounds
    );
    assert_eq!(clean_run.pairs, poisoned_run.pairs);
    assert_eq!(clean_run.forecasters[0].1, poisoned_run.forecasters[0].1);
    assert_eq!(clean_run.policies[0], poisoned_run.policies[0]);
    // Only the held-out evaluation moves.
    assert_ne!(
        clean_run.report.horizons[0].mse,
        poisoned_run.report.horizons[0].mse
    );
}

/// Backend that returns k copies of the same text; every ranking is
/// degenerate.
struct ConstBackend;

impl GeneratorBackend for ConstBackend {
    fn id(&self) -> &str {
        "const"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<CandidateText>> {
        Ok((0..request.k)
            .map(|i| CandidateText {
                body: "a steady level".to_string(),
                backend_id: "const".to_string(),
                generation_index: i,
            })
            .collect())
    }
}

/// Samples, prompts, validation examples, and vocabulary built the same
/// way run_pipeline builds them, for driving run_round directly.
struct RoundFixture {
    train_samples: Vec<ter_tsf_core::data::Sample>,
    prompts: Vec<ter_tsf_core::textualize::Prompt>,
    val_examples: Vec<TrainExample>,
    vocab: Vocab,
}

fn round_fixture(ds: &Dataset, cfg: &PipelineConfig, extra_vocab: &[String]) -> RoundFixture {
    let (train_seg, val_seg, _) =
        ter_tsf_core::data::chronological_split(&ds.series, (0.7, 0.1, 0.2)).unwrap();
    let stats = ter_tsf_core::data::znorm_fit(&train_seg).unwrap();
    let norm = |seg: &ter_tsf_core::data::TimeSeries| {
        seg.with_values(ter_tsf_core::data::znorm_apply(&seg.values, &stats))
    };
    let train_samples: Vec<_> =
        ter_tsf_core::data::make_windows(&norm(&train_seg), 24, 6, 30, SplitTag::Train)
            .into_iter()
            .map(|s| ter_tsf_core::data::attach_texts(s, &ds.texts))
            .collect();
    let val_samples: Vec<_> =
        ter_tsf_core::data::make_windows(&norm(&val_seg), 24, 6, 30, SplitTag::Val)
            .into_iter()
            .map(|s| ter_tsf_core::data::attach_texts(s, &ds.texts))
            .collect();
    let prompts: Vec<_> = train_samples
        .iter()
        .map(|s| {
            let meta = ter_tsf_core::textualize::SeriesMeta {
                frequency: ds.series.frequency,
                span: s.lookback_span,
            };
            let ser = ter_tsf_core::textualize::SerializedSeries::new(&s.lookback, &meta).unwrap();
            ter_tsf_core::textualize::assemble_prompt(
                &ser.s_txt,
                &ser.a_txt,
                &s.texts,
                &cfg.task_prompt,
            )
            .unwrap()
        })
        .collect();
    let val_examples: Vec<TrainExample> = val_samples
        .iter()
        .map(|s| TrainExample {
            lookback: s.lookback.clone(),
            truth: s.horizon_truth.clone(),
            text: Some(s.joined_text().unwrap_or_default()),
            split: s.split,
        })
        .collect();
    let corpus: Vec<String> = train_samples.iter().filter_map(|s| s.joined_text()).collect();
    let vocab = Vocab::build(corpus.iter().map(String::as_str), extra_vocab);
    RoundFixture {
        train_samples,
        prompts,
        val_examples,
        vocab,
    }
}

#[test]
fn degenerate_round_emits_zero_pairs_and_still_retrains() {
    let ds = small_dataset(23);
    let cfg = fast_config(29, Mode::TsfTerR12, BackendKind::Mock);
    let reward = cfg.effective_reward();
    let fcfg = cfg.forecaster.to_config(24, 6, ter_tsf_core::forecaster::TextMode::Reinforced);
    let fixture = round_fixture(&ds, &cfg, &["a steady level".to_string()]);
    let forecaster = ForecasterParams::init(&fcfg, fixture.vocab.clone(), 1).unwrap();

    let backend = ConstBackend;
    let ctx = RoundContext {
        cfg: &cfg,
        fcfg: &fcfg,
        reward: &reward,
        train_samples: &fixture.train_samples,
        prompts: &fixture.prompts,
        val_examples: &fixture.val_examples,
        vocab: &fixture.vocab,
        external_backend: Some(&backend),
        horizon_index: 0,
    };
    let state = RoundState {
        round: 0,
        policy: None,
        forecaster: forecaster.clone(),
        pairs: Vec::new(),
        mean_best_reward: 0.0,
        skipped: 0,
    };
    let out = run_round(state, &ctx).unwrap();
    assert_eq!(out.round, 1);
    assert!(out.pairs.is_empty());
    assert_eq!(out.skipped, fixture.train_samples.len());
    // The forecaster was still retrained on the single candidate.
    assert_ne!(out.forecaster, forecaster);
}

#[test]
fn relevance_only_ranking_always_prefers_the_keyword_candidate() {
    let ds = small_dataset(43);
    let mut cfg = fast_config(47, Mode::TsfTerR12, BackendKind::Mock);
    cfg.reward = RewardConfig {
        w1: 0.0,
        w2: 1.0,
        ..Default::default()
    };
    let reward = cfg.effective_reward();
    let fcfg = cfg.forecaster.to_config(24, 6, ter_tsf_core::forecaster::TextMode::Reinforced);
    // Candidate 0 carries three keywords, candidate 1 carries none.
    let backend = ter_tsf_core::generator::MockBackend::new(reward.keywords.clone())
        .with_keyword_counts(vec![3, 0]);
    let fixture = round_fixture(&ds, &cfg, &backend.vocabulary_hint());
    let forecaster = ForecasterParams::init(&fcfg, fixture.vocab.clone(), 2).unwrap();

    let ctx = RoundContext {
        cfg: &cfg,
        fcfg: &fcfg,
        reward: &reward,
        train_samples: &fixture.train_samples,
        prompts: &fixture.prompts,
        val_examples: &fixture.val_examples,
        vocab: &fixture.vocab,
        external_backend: Some(&backend),
        horizon_index: 0,
    };
    let state = RoundState {
        round: 0,
        policy: None,
        forecaster,
        pairs: Vec::new(),
        mean_best_reward: 0.0,
        skipped: 0,
    };
    let out = run_round(state, &ctx).unwrap();
    // One pair per sample, and the keyword-rich candidate always wins.
    assert_eq!(out.pairs.len(), fixture.train_samples.len());
    assert_eq!(out.skipped, 0);
    for pair in &out.pairs {
        assert!(
            pair.chosen.contains("analysts point to"),
            "chosen lost its keywords: {}",
            pair.chosen
        );
        assert!(pair.reward_chosen > pair.reward_rejected);
    }
}

#[test]
fn evaluate_hand_case() {
    let fcfg = ter_tsf_core::forecaster::ForecasterConfig {
        lookback_len: 8,
        patch_len: 4,
        stride: 4,
        model_dim: 8,
        encoder_layers: 1,
        attention_heads: 2,
        head_hidden: 8,
        horizon: 2,
        text_mode: ter_tsf_core::forecaster::TextMode::None,
    };
    // All-zero parameters predict the zero vector.
    let params = ForecasterParams::zeros(&fcfg, Vocab::build([], &[])).unwrap();
    let example = TrainExample {
        lookback: vec![0.0; 8],
        truth: vec![1.0, 2.0],
        text: None,
        split: SplitTag::Test,
    };
    let metrics = evaluate(&fcfg, &params, &[example]).unwrap();
    assert!((metrics.mse - 2.5).abs() < 1e-12);
    assert!((metrics.mae - 1.5).abs() < 1e-12);

    let perfect = TrainExample {
        lookback: vec![0.0; 8],
        truth: vec![0.0, 0.0],
        text: None,
        split: SplitTag::Test,
    };
    let metrics = evaluate(&fcfg, &params, &[perfect]).unwrap();
    assert_eq!(metrics.mse, 0.0);
    assert_eq!(metrics.mae, 0.0);
}

#[test]
fn config_validation_rejects_inconsistencies() {
    let ds = small_dataset(31);
    let mut cfg = fast_config(1, Mode::TsfTerR12, BackendKind::Toy);
    cfg.rounds = 0;
    assert!(run_pipeline(&cfg, &ds).is_err());

    let mut cfg = fast_config(1, Mode::TsfTerR12, BackendKind::Toy);
    cfg.candidates_per_sample = 0;
    assert!(run_pipeline(&cfg, &ds).is_err());

    let mut cfg = fast_config(1, Mode::TsfTerR12, BackendKind::Toy);
    cfg.forecaster.patch_len = 99;
    assert!(run_pipeline(&cfg, &ds).is_err());

    let mut cfg = fast_config(1, Mode::TsfTerR12, BackendKind::Toy);
    cfg.reward.keywords.clear();
    assert!(run_pipeline(&cfg, &ds).is_err());
}

#[test]
fn mode_strings_round_trip() {
    for mode in [
        Mode::TsfOnly,
        Mode::TsfText,
        Mode::TsfTer,
        Mode::TsfTerR1,
        Mode::TsfTerR12,
    ] {
        let parsed: Mode = mode.as_str().parse().unwrap();
        assert_eq!(parsed, mode);
    }
    assert!("tsf_bogus".parse::<Mode>().is_err());
}

/// Minimal HTTP service that answers every generation request with `n`
/// candidates, alternating keyword-rich and keyword-free bodies.
fn spawn_generation_service(listener: TcpListener) {
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line.is_empty() {
                    return;
                }
                if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0u8; content_length];
            if reader.read_exact(&mut payload).is_err() {
                return;
            }
            let request: serde_json::Value = serde_json::from_slice(&payload).unwrap();
            let n = request["n"].as_u64().unwrap() as usize;
            let candidates: Vec<String> = (0..n)
                .map(|i| {
                    if i % 2 == 0 {
                        "an upward trend with a sharp peak and seasonality".to_string()
                    } else {
                        "nothing notable happened".to_string()
                    }
                })
                .collect();
            let body = serde_json::json!({ "candidates": candidates }).to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
}

#[test]
fn remote_backend_is_export_only() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    spawn_generation_service(listener);
    std::env::set_var("TER_GEN_ENDPOINT", format!("http://{addr}/generate"));

    let ds = small_dataset(37);
    let mut cfg = fast_config(41, Mode::TsfTerR12, BackendKind::Remote);
    cfg.rounds = 1;
    let run = run_pipeline(&cfg, &ds).unwrap();
    // Pairs were built for export, but no in-process policy exists.
    assert!(!run.pairs.is_empty());
    assert!(run.policies[0].is_none());
    assert!(run.pairs.iter().all(|p| p.chosen.contains("trend")));
}

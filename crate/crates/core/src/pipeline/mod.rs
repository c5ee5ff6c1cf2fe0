//! The closed training loop: per round, generate candidate texts for every
//! training window, score them with the dual reward, build preference
//! pairs, update the generator, and retrain the forecaster on the best
//! candidates; then evaluate on the held-out test split.

mod report;

pub use report::{emit_report, HorizonReport, Metrics, Report, RoundSummary};

use serde::{Deserialize, Serialize};

use crate::data::{
    attach_texts, chronological_split, make_windows, znorm_apply, Dataset, Sample, SplitTag,
};
use crate::dpo::{build_pairs, dpo_step, DpoConfig, PreferencePair, SampleRanking};
use crate::error::{Error, Result};
use crate::forecaster::{
    predict_with_text, train_forecaster, ForecasterConfig, ForecasterParams, TextMode,
    TrainConfig, TrainExample, Vocab,
};
use crate::generator::{
    BackendKind, GenerationRequest, GeneratorBackend, MockBackend, RemoteBackend, ToyLm,
    ToyLmBackend,
};
use crate::numerics::derive_seed;
use crate::reward::{
    rank_candidates, reward_accuracy, reward_relevance_with, Ranking, RewardConfig,
    ScoredCandidate,
};
use crate::textualize::{assemble_prompt, Prompt, SerializedSeries, SeriesMeta, DEFAULT_TASK_PROMPT};

/// Ablation mode: which inputs the forecaster sees and whether the
/// generator is used and preference-trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Numeric-only forecaster.
    TsfOnly,
    /// Forecaster with the raw accompanying texts; no generation.
    TsfText,
    /// Generated texts without preference optimization.
    TsfTer,
    /// Generated texts, preference-trained with the accuracy reward only.
    TsfTerR1,
    /// Generated texts, preference-trained with both rewards.
    #[default]
    TsfTerR12,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::TsfOnly => "tsf_only",
            Mode::TsfText => "tsf_text",
            Mode::TsfTer => "tsf_ter",
            Mode::TsfTerR1 => "tsf_ter_r1",
            Mode::TsfTerR12 => "tsf_ter_r12",
        }
    }

    pub fn uses_text(&self) -> bool {
        !matches!(self, Mode::TsfOnly)
    }

    pub fn uses_generation(&self) -> bool {
        matches!(self, Mode::TsfTer | Mode::TsfTerR1 | Mode::TsfTerR12)
    }

    pub fn uses_dpo(&self) -> bool {
        matches!(self, Mode::TsfTerR1 | Mode::TsfTerR12)
    }

    pub fn text_mode(&self) -> TextMode {
        match self {
            Mode::TsfOnly => TextMode::None,
            Mode::TsfText => TextMode::Raw,
            _ => TextMode::Reinforced,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsf_only" => Ok(Mode::TsfOnly),
            "tsf_text" => Ok(Mode::TsfText),
            "tsf_ter" => Ok(Mode::TsfTer),
            "tsf_ter_r1" => Ok(Mode::TsfTerR1),
            "tsf_ter_r12" => Ok(Mode::TsfTerR12),
            other => Err(Error::config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Window construction settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            lookback: 36,
            horizons: vec![6, 12, 18],
            stride: 1,
        }
    }
}

/// Generation sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 1.0,
            max_tokens: 16,
        }
    }
}

/// Forecaster architecture settings; lookback, horizon, and text mode are
/// filled in per run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecasterHyper {
    pub patch_len: usize,
    pub stride: usize,
    pub model_dim: usize,
    pub encoder_layers: usize,
    pub attention_heads: usize,
    pub head_hidden: usize,
}

impl Default for ForecasterHyper {
    fn default() -> Self {
        ForecasterHyper {
            patch_len: 16,
            stride: 8,
            model_dim: 64,
            encoder_layers: 2,
            attention_heads: 4,
            head_hidden: 64,
        }
    }
}

impl ForecasterHyper {
    pub fn to_config(&self, lookback: usize, horizon: usize, text_mode: TextMode) -> ForecasterConfig {
        ForecasterConfig {
            lookback_len: lookback,
            patch_len: self.patch_len,
            stride: self.stride,
            model_dim: self.model_dim,
            encoder_layers: self.encoder_layers,
            attention_heads: self.attention_heads,
            head_hidden: self.head_hidden,
            horizon,
            text_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Number of refinement rounds (m).
    pub rounds: usize,
    /// Candidates generated per sample each round (k).
    pub candidates_per_sample: usize,
    pub mode: Mode,
    pub backend: BackendKind,
    pub seed: u64,
    pub window: WindowConfig,
    pub reward: RewardConfig,
    pub dpo: DpoConfig,
    pub forecaster: ForecasterHyper,
    pub train: TrainConfig,
    pub generation: GenerationConfig,
    pub task_prompt: String,
    /// Keep the previous round's forecaster as the starting point instead
    /// of re-initializing.
    pub warm_start: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rounds: 4,
            candidates_per_sample: 2,
            mode: Mode::default(),
            backend: BackendKind::default(),
            seed: 0,
            window: WindowConfig::default(),
            reward: RewardConfig::default(),
            dpo: DpoConfig::default(),
            forecaster: ForecasterHyper::default(),
            train: TrainConfig::default(),
            generation: GenerationConfig::default(),
            task_prompt: DEFAULT_TASK_PROMPT.to_string(),
            warm_start: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::config("rounds (m) must be at least 1"));
        }
        if self.candidates_per_sample < 1 {
            return Err(Error::config("candidates_per_sample (k) must be at least 1"));
        }
        if self.window.horizons.is_empty() || self.window.horizons.contains(&0) {
            return Err(Error::config("horizons must be non-empty positive integers"));
        }
        if self.window.stride == 0 || self.window.lookback == 0 {
            return Err(Error::config("window lookback and stride must be positive"));
        }
        if self.forecaster.patch_len > self.window.lookback {
            return Err(Error::config(format!(
                "patch_len {} exceeds window lookback {}",
                self.forecaster.patch_len, self.window.lookback
            )));
        }
        if self.task_prompt.is_empty() {
            return Err(Error::config("task prompt must be non-empty"));
        }
        self.reward.validate()?;
        self.dpo.validate()?;
        self.train.validate()?;
        // Surface architecture problems before any compute.
        self.forecaster
            .to_config(self.window.lookback, self.window.horizons[0], TextMode::None)
            .validate()
    }

    /// Reward configuration after applying the mode's weight overrides.
    pub fn effective_reward(&self) -> RewardConfig {
        let mut reward = self.reward.clone();
        if self.mode == Mode::TsfTerR1 {
            reward.w2 = 0.0;
        }
        reward
    }
}

/// State carried across rounds for one horizon.
pub struct RoundState {
    pub round: usize,
    pub policy: Option<ToyLm>,
    pub forecaster: ForecasterParams,
    pub pairs: Vec<PreferencePair>,
    pub mean_best_reward: f64,
    pub skipped: usize,
}

/// Everything a round needs besides the mutable state.
pub struct RoundContext<'a> {
    pub cfg: &'a PipelineConfig,
    pub fcfg: &'a ForecasterConfig,
    pub reward: &'a RewardConfig,
    pub train_samples: &'a [Sample],
    pub prompts: &'a [Prompt],
    pub val_examples: &'a [TrainExample],
    pub vocab: &'a Vocab,
    pub external_backend: Option<&'a dyn GeneratorBackend>,
    pub horizon_index: usize,
}

fn generate_candidates(
    policy: Option<&ToyLm>,
    external: Option<&dyn GeneratorBackend>,
    request: &GenerationRequest,
) -> Result<Vec<crate::generator::CandidateText>> {
    match (policy, external) {
        (Some(policy), None) => ToyLmBackend::new(policy).generate(request),
        (None, Some(backend)) => backend.generate(request),
        _ => Err(Error::config("exactly one generation backend must be active")),
    }
}

/// Execute one refinement round: generate, score with the previous round's
/// forecaster, rank, pair, preference-update the policy, and retrain the
/// forecaster on the best candidates.
pub fn run_round(mut state: RoundState, ctx: &RoundContext<'_>) -> Result<RoundState> {
    let round = state.round + 1;
    let k = ctx.cfg.candidates_per_sample;
    let mut rankings: Vec<SampleRanking> = Vec::new();
    let mut best_texts: Vec<String> = Vec::with_capacity(ctx.train_samples.len());
    let mut best_reward_sum = 0.0;

    for (i, sample) in ctx.train_samples.iter().enumerate() {
        if sample.split != SplitTag::Train {
            return Err(Error::data(format!(
                "round {round}: non-train sample {} reached generation",
                sample.id
            )));
        }
        let request = GenerationRequest {
            prompt: ctx.prompts[i].rendered.clone(),
            k,
            temperature: ctx.cfg.generation.temperature,
            max_tokens: ctx.cfg.generation.max_tokens,
            seed: derive_seed(
                ctx.cfg.seed,
                &[ctx.horizon_index as u64, round as u64, i as u64],
            ),
        };
        let candidates =
            generate_candidates(state.policy.as_ref(), ctx.external_backend, &request)
                .map_err(|e| e.with_round_context(round))?;
        let scored: Vec<ScoredCandidate> = candidates
            .into_iter()
            .map(|candidate| {
                let prediction =
                    predict_with_text(ctx.fcfg, &state.forecaster, &sample.lookback, Some(&candidate.body))?;
                let r1 = reward_accuracy(&sample.horizon_truth, &prediction)?;
                let r2 = reward_relevance_with(&candidate.body, ctx.reward);
                Ok(ScoredCandidate::new(candidate, r1, r2, ctx.reward))
            })
            .collect::<Result<_>>()?;

        let best = if k >= 2 {
            let ranking = rank_candidates(&scored)?;
            let best = match ranking {
                Ranking::Pair { best, .. } => best,
                Ranking::Degenerate => 0,
            };
            rankings.push(SampleRanking {
                sample_id: sample.id.clone(),
                prompt: ctx.prompts[i].rendered.clone(),
                scored: scored.clone(),
                ranking,
            });
            best
        } else {
            0
        };
        best_reward_sum += scored[best].r;
        best_texts.push(scored[best].candidate.body.clone());
    }

    let (pairs, skipped) = build_pairs(&rankings, round);
    if k >= 2 && pairs.is_empty() {
        log::warn!(
            "round {round}: every sample ranked degenerate ({skipped} skipped); no preference pairs emitted"
        );
    }

    // Preference update on the in-process policy; external backends are
    // export-only and keep their pairs for later training.
    if ctx.cfg.mode.uses_dpo() && !pairs.is_empty() {
        if let Some(policy) = state.policy.as_mut() {
            let reference = policy.clone();
            for _ in 0..ctx.cfg.dpo.steps_per_round {
                dpo_step(policy, &reference, &pairs, &ctx.cfg.dpo)
                    .map_err(|e| e.with_round_context(round))?;
            }
        }
    }

    // Retrain the forecaster on (lookback, best candidate) pairs.
    let train_examples: Vec<TrainExample> = ctx
        .train_samples
        .iter()
        .zip(&best_texts)
        .map(|(s, text)| TrainExample {
            lookback: s.lookback.clone(),
            truth: s.horizon_truth.clone(),
            text: Some(text.clone()),
            split: s.split,
        })
        .collect();
    let retrain_seed = derive_seed(ctx.cfg.seed, &[ctx.horizon_index as u64, round as u64]);
    let forecaster = if ctx.cfg.warm_start {
        crate::forecaster::train_forecaster_with_init(
            &train_examples,
            ctx.val_examples,
            ctx.fcfg,
            &ctx.cfg.train,
            state.forecaster.clone(),
        )?
        .0
    } else {
        train_forecaster(
            &train_examples,
            ctx.val_examples,
            ctx.fcfg,
            &ctx.cfg.train,
            ctx.vocab.clone(),
            retrain_seed,
        )?
        .0
    };

    let n = ctx.train_samples.len().max(1);
    state.pairs.extend(pairs);
    Ok(RoundState {
        round,
        policy: state.policy,
        forecaster,
        pairs: state.pairs,
        mean_best_reward: best_reward_sum / n as f64,
        skipped,
    })
}

/// Forecast-quality metrics on a resolved example set.
pub fn evaluate(
    fcfg: &ForecasterConfig,
    params: &ForecasterParams,
    examples: &[TrainExample],
) -> Result<Metrics> {
    if examples.is_empty() {
        return Err(Error::data("evaluation set must be non-empty"));
    }
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let prediction = predict_with_text(fcfg, params, &ex.lookback, ex.text_as_deref())?;
        if prediction.len() != ex.truth.len() {
            return Err(Error::data("evaluation horizon mismatch"));
        }
        for (p, t) in prediction.iter().zip(&ex.truth) {
            se += (p - t) * (p - t);
            ae += (p - t).abs();
            count += 1;
        }
    }
    Ok(Metrics {
        mse: se / count as f64,
        mae: ae / count as f64,
    })
}

/// Output of a full pipeline run.
pub struct PipelineRun {
    pub report: Report,
    /// All preference pairs across rounds and horizons, in emission order.
    pub pairs: Vec<PreferencePair>,
    /// Final trained forecaster per horizon, aligned with
    /// `report.horizons`.
    pub forecasters: Vec<(ForecasterConfig, ForecasterParams)>,
    /// Final generator policy per horizon for the toy backend.
    pub policies: Vec<Option<ToyLm>>,
}

struct HorizonData {
    train: Vec<Sample>,
    val: Vec<Sample>,
    test: Vec<Sample>,
}

fn window_split(dataset: &Dataset, cfg: &PipelineConfig, horizon: usize) -> Result<HorizonData> {
    let (train_seg, val_seg, test_seg) = chronological_split(&dataset.series, (0.7, 0.1, 0.2))?;
    let stats = crate::data::znorm_fit(&train_seg)?;
    let normalize =
        |seg: &crate::data::TimeSeries| seg.with_values(znorm_apply(&seg.values, &stats));
    let cut = |seg: &crate::data::TimeSeries, tag: SplitTag| -> Vec<Sample> {
        make_windows(seg, cfg.window.lookback, horizon, cfg.window.stride, tag)
            .into_iter()
            .map(|s| attach_texts(s, &dataset.texts))
            .collect()
    };
    let data = HorizonData {
        train: cut(&normalize(&train_seg), SplitTag::Train),
        val: cut(&normalize(&val_seg), SplitTag::Val),
        test: cut(&normalize(&test_seg), SplitTag::Test),
    };
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::data(format!(
            "horizon {horizon}: splits too short for lookback {} (train windows {}, test windows {})",
            cfg.window.lookback,
            data.train.len(),
            data.test.len()
        )));
    }
    Ok(data)
}

fn resolve_examples(samples: &[Sample], mode: Mode, bodies: Option<&[String]>) -> Vec<TrainExample> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| TrainExample {
            lookback: s.lookback.clone(),
            truth: s.horizon_truth.clone(),
            text: match (mode.uses_text(), bodies) {
                (false, _) => None,
                (true, Some(bodies)) => Some(bodies[i].clone()),
                (true, None) => Some(s.joined_text().unwrap_or_default()),
            },
            split: s.split,
        })
        .collect()
}

fn build_prompt(sample: &Sample, dataset: &Dataset, task_prompt: &str) -> Result<Prompt> {
    let meta = SeriesMeta {
        frequency: dataset.series.frequency,
        span: sample.lookback_span,
    };
    let serialized = SerializedSeries::new(&sample.lookback, &meta)?;
    assemble_prompt(&serialized.s_txt, &serialized.a_txt, &sample.texts, task_prompt)
}

/// Run the full pipeline on a dataset: split, normalize, window, train,
/// iterate the refinement rounds per horizon, and evaluate on the test
/// split. Deterministic for the mock and toy backends given the seed.
pub fn run_pipeline(cfg: &PipelineConfig, dataset: &Dataset) -> Result<PipelineRun> {
    cfg.validate()?;
    let reward = cfg.effective_reward();
    let mock_backend;
    let remote_backend;
    let external_backend: Option<&dyn GeneratorBackend> = if cfg.mode.uses_generation() {
        match cfg.backend {
            BackendKind::Mock => {
                mock_backend = MockBackend::new(reward.keywords.clone());
                Some(&mock_backend)
            }
            BackendKind::Remote => {
                remote_backend = RemoteBackend::from_env()?;
                Some(&remote_backend)
            }
            BackendKind::Toy => None,
        }
    } else {
        None
    };

    let mut horizon_reports = Vec::new();
    let mut all_pairs = Vec::new();
    let mut forecasters = Vec::new();
    let mut policies = Vec::new();
    for (h_idx, &horizon) in cfg.window.horizons.iter().enumerate() {
        let data = window_split(dataset, cfg, horizon)?;
        let fcfg = cfg
            .forecaster
            .to_config(cfg.window.lookback, horizon, cfg.mode.text_mode());
        fcfg.validate()?;

        // Vocabulary: training-corpus tokens plus whatever the generator
        // can emit, so candidates embed distinctly. Numeric-only mode gets
        // an empty vocabulary: its embedding table must not depend on the
        // texts in any way, including through initialization shapes.
        let vocab = if cfg.mode.uses_text() {
            let corpus: Vec<String> = data
                .train
                .iter()
                .filter_map(|s| s.joined_text())
                .collect();
            let mut extra: Vec<String> = Vec::new();
            if cfg.mode.uses_generation() {
                match cfg.backend {
                    BackendKind::Toy => extra.extend(ToyLm::default_vocab()),
                    _ => {
                        if let Some(backend) = external_backend {
                            extra.extend(backend.vocabulary_hint());
                        }
                    }
                }
            }
            Vocab::build(corpus.iter().map(String::as_str), &extra)
        } else {
            Vocab::build([], &[])
        };

        // Round 0: train on the mode-consistent text source (raw texts for
        // generation modes).
        let train_examples = resolve_examples(&data.train, cfg.mode, None);
        let val_examples = resolve_examples(&data.val, cfg.mode, None);
        let init_seed = derive_seed(cfg.seed, &[h_idx as u64, 0]);
        let (forecaster, _) = train_forecaster(
            &train_examples,
            &val_examples,
            &fcfg,
            &cfg.train,
            vocab.clone(),
            init_seed,
        )?;

        let mut rounds = Vec::new();
        let mut state = RoundState {
            round: 0,
            policy: match (cfg.mode.uses_generation(), cfg.backend) {
                (true, BackendKind::Toy) => Some(
                    ToyLm::seeded(
                        ToyLm::default_vocab(),
                        derive_seed(cfg.seed, &[h_idx as u64, u64::MAX]),
                        0.5,
                    )?,
                ),
                _ => None,
            },
            forecaster,
            pairs: Vec::new(),
            mean_best_reward: 0.0,
            skipped: 0,
        };

        if cfg.mode.uses_generation() {
            let prompts: Vec<Prompt> = data
                .train
                .iter()
                .map(|s| build_prompt(s, dataset, &cfg.task_prompt))
                .collect::<Result<_>>()?;
            let ctx = RoundContext {
                cfg,
                fcfg: &fcfg,
                reward: &reward,
                train_samples: &data.train,
                prompts: &prompts,
                val_examples: &val_examples,
                vocab: &vocab,
                external_backend,
                horizon_index: h_idx,
            };
            for _ in 0..cfg.rounds {
                state = run_round(state, &ctx)?;
                rounds.push(RoundSummary {
                    round: state.round,
                    mean_best_reward: state.mean_best_reward,
                    pairs: state.pairs.iter().filter(|p| p.round == state.round).count(),
                    skipped: state.skipped,
                });
            }
        }

        // Final evaluation on the test split. Generation modes produce one
        // reinforced text per test window with the frozen policy.
        let test_examples = if cfg.mode.uses_generation() {
            let mut bodies = Vec::with_capacity(data.test.len());
            for (i, sample) in data.test.iter().enumerate() {
                let prompt = build_prompt(sample, dataset, &cfg.task_prompt)?;
                let request = GenerationRequest {
                    prompt: prompt.rendered,
                    k: 1,
                    temperature: cfg.generation.temperature,
                    max_tokens: cfg.generation.max_tokens,
                    seed: derive_seed(
                        cfg.seed,
                        &[h_idx as u64, (cfg.rounds + 1) as u64, i as u64],
                    ),
                };
                let mut candidates =
                    generate_candidates(state.policy.as_ref(), external_backend, &request)?;
                bodies.push(candidates.remove(0).body);
            }
            resolve_examples(&data.test, cfg.mode, Some(&bodies))
        } else {
            resolve_examples(&data.test, cfg.mode, None)
        };
        let metrics = evaluate(&fcfg, &state.forecaster, &test_examples)?;

        all_pairs.extend(state.pairs);
        forecasters.push((fcfg, state.forecaster));
        policies.push(state.policy);
        horizon_reports.push(HorizonReport {
            horizon,
            mse: metrics.mse,
            mae: metrics.mae,
            rounds,
        });
    }

    let avg_mse =
        horizon_reports.iter().map(|h| h.mse).sum::<f64>() / horizon_reports.len() as f64;
    let avg_mae =
        horizon_reports.iter().map(|h| h.mae).sum::<f64>() / horizon_reports.len() as f64;
    Ok(PipelineRun {
        report: Report {
            domain: dataset.series.domain.clone(),
            mode: cfg.mode,
            backend: cfg.backend,
            seed: cfg.seed,
            units: "normalized".to_string(),
            avg_mse,
            avg_mae,
            horizons: horizon_reports,
            config: cfg.clone(),
        },
        pairs: all_pairs,
        forecasters,
        policies,
    })
}

//! Core library for reward-guided text reinforcement in multimodal time
//! series forecasting: ingest a series plus aligned texts, serialize
//! windows into prompts, generate candidate reinforced texts, score them
//! with a dual accuracy/relevance reward, build preference pairs, optimize
//! the generator, and retrain/evaluate a compact multimodal forecaster in
//! a closed loop.

pub mod data;
pub mod dpo;
pub mod error;
pub mod forecaster;
pub mod generator;
pub mod numerics;
pub mod pipeline;
pub mod reward;
pub mod synthetic;
pub mod textualize;

pub use data::{Dataset, Frequency, FrequencyConfig, NormStats, Sample, SplitTag, TextRecord, TimeSeries};
pub use dpo::{DpoConfig, PreferencePair};
pub use error::{Error, Result};
pub use forecaster::{ForecasterConfig, ForecasterParams, TextMode};
pub use generator::{BackendKind, CandidateText, GenerationRequest, GeneratorBackend, ToyLm};
pub use pipeline::{Mode, PipelineConfig, Report};
pub use reward::{RewardConfig, ScoredCandidate};
pub use textualize::{Prompt, SerializedSeries};

//! Candidate-text generation behind a uniform backend interface: a
//! deterministic mock, an exact-probability toy language model, and a
//! remote HTTP service.

mod mock;
mod remote;
mod toy;

pub use mock::MockBackend;
pub use remote::{RemoteBackend, RemoteConfig, ENDPOINT_ENV, TOKEN_ENV};
pub use toy::{toy_lm_logprob, toy_lm_sample, ToyLm, ToyLmBackend};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One generation call: produce `k` candidates for a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub k: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, k: usize, seed: u64) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            k,
            temperature: 1.0,
            max_tokens: 24,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.max_tokens < 1 {
            return Err(Error::config("max_tokens must be at least 1"));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::config("temperature must be a non-negative real"));
        }
        Ok(())
    }
}

/// A generated candidate text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateText {
    pub body: String,
    pub backend_id: String,
    pub generation_index: usize,
}

/// Uniform generator interface. Implementations return exactly `k`
/// candidates or an error, never a partial list.
pub trait GeneratorBackend {
    fn id(&self) -> &str;

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<CandidateText>>;

    /// Tokens this backend can emit, used to extend the forecaster's text
    /// vocabulary so generated candidates embed distinctly. Empty when the
    /// reachable token set is unknown (remote services).
    fn vocabulary_hint(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Backend selector used by configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Toy,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "toy" => Ok(BackendKind::Toy),
            "remote" => Ok(BackendKind::Remote),
            other => Err(Error::config(format!("unknown backend `{other}`"))),
        }
    }
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::Mock => "mock",
            BackendKind::Toy => "toy",
            BackendKind::Remote => "remote",
        }
    }
}

//! HTTP generation backend. POSTs `{prompt, n, temperature, max_tokens,
//! seed}` and expects `{candidates: [text, ...]}` back; retries transport
//! failures with exponential backoff before giving up.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CandidateText, GenerationRequest, GeneratorBackend};
use crate::error::{Error, Result};

/// Environment variable holding the generation endpoint URL.
pub const ENDPOINT_ENV: &str = "TER_GEN_ENDPOINT";
/// Environment variable holding the bearer credential, if any.
pub const TOKEN_ENV: &str = "TER_GEN_TOKEN";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    /// Total attempts before a hard error.
    pub attempts: usize,
    /// Backoff after the first failure; doubles per retry.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            token: None,
            attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(30),
        }
    }

    /// Read endpoint and credential from `TER_GEN_ENDPOINT` /
    /// `TER_GEN_TOKEN`.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| {
            Error::config(format!("remote backend requires {ENDPOINT_ENV} to be set"))
        })?;
        let mut cfg = RemoteConfig::new(endpoint);
        cfg.token = std::env::var(TOKEN_ENV).ok();
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    n: usize,
    temperature: f64,
    max_tokens: usize,
    seed: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    candidates: Vec<String>,
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        RemoteBackend { cfg, agent }
    }

    pub fn from_env() -> Result<Self> {
        Ok(RemoteBackend::new(RemoteConfig::from_env()?))
    }

    fn post_once(&self, request: &GenerationRequest) -> std::result::Result<WireResponse, String> {
        let body = WireRequest {
            prompt: &request.prompt,
            n: request.k,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(token) = &self.cfg.token {
            req = req.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = req.send_json(&body).map_err(|e| e.to_string())?;
        response
            .body_mut()
            .read_json::<WireResponse>()
            .map_err(|e| format!("malformed response body: {e}"))
    }
}

impl GeneratorBackend for RemoteBackend {
    fn id(&self) -> &str {
        "remote"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Vec<CandidateText>> {
        request.validate()?;
        let mut last_err = String::new();
        for attempt in 0..self.cfg.attempts {
            if attempt > 0 {
                std::thread::sleep(self.cfg.backoff * (1 << (attempt - 1)) as u32);
            }
            match self.post_once(request) {
                Ok(response) => {
                    if response.candidates.len() != request.k {
                        return Err(Error::backend(
                            attempt + 1,
                            format!(
                                "service returned {} candidates, expected {}",
                                response.candidates.len(),
                                request.k
                            ),
                        ));
                    }
                    if response.candidates.iter().any(|c| c.is_empty()) {
                        return Err(Error::backend(attempt + 1, "service returned an empty candidate"));
                    }
                    return Ok(response
                        .candidates
                        .into_iter()
                        .enumerate()
                        .map(|(i, body)| CandidateText {
                            body,
                            backend_id: self.id().to_string(),
                            generation_index: i,
                        })
                        .collect());
                }
                Err(e) => last_err = e,
            }
        }
        Err(Error::backend(self.cfg.attempts, last_err))
    }
}

//! Language-model client for a remote log-probability endpoint.
//!
//! The wire protocol is a minimal JSON-over-HTTP contract:
//!
//! * `POST {base_url}/logprobs` with `{"model": str, "context": [int]}`
//!   returns `{"logprobs": [float]}` with one entry per vocabulary token;
//! * `POST {base_url}/score` with `{"model": str, "context": [int],
//!   "continuation": [int]}` returns `{"token_logprobs": [float]}`.
//!
//! All numbers are natural-log. JSON cannot express `-inf`, so servers send
//! `null` for zero-probability (or truncated) entries; a truncated response
//! is accepted only while the unaccounted probability mass stays within
//! [`EndpointConfig::max_truncation_mass`]. 4xx responses and malformed
//! bodies are protocol errors; timeouts, connection failures, and 5xx are
//! transport errors and consume the retry budget.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LanguageModel, LogProbVector, Token, Vocabulary};

/// Connection settings for one remote model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Whole-request timeout in seconds.
    pub timeout_secs: f64,
    /// Additional attempts after a transport failure (at most 5).
    pub retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
    /// Tolerated unaccounted probability mass in truncated responses.
    pub max_truncation_mass: f64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            timeout_secs: 10.0,
            retries: 2,
            auth_token: None,
            max_truncation_mass: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return Err(Error::Input("timeout must be > 0".into()));
        }
        if self.retries > 5 {
            return Err(Error::Input(format!(
                "retries {} exceed the limit of 5",
                self.retries
            )));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct LogprobsRequest<'a> {
    model: &'a str,
    context: &'a [Token],
}

#[derive(Deserialize)]
struct LogprobsResponse {
    logprobs: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    model: &'a str,
    context: &'a [Token],
    continuation: &'a [Token],
}

#[derive(Deserialize)]
struct ScoreResponse {
    token_logprobs: Vec<Option<f64>>,
}

/// A remote model speaking the log-probability protocol. Shareable across
/// threads; the forward-pass counter accumulates atomically.
pub struct RemoteModel {
    config: EndpointConfig,
    vocab: Vocabulary,
    agent: ureq::Agent,
    passes: AtomicU64,
}

impl RemoteModel {
    pub fn new(config: EndpointConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Ok(Self {
            config,
            vocab,
            agent: ureq::Agent::new_with_config(agent_config),
            passes: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// POST `body` to `path`, retrying transport failures, and parse the
    /// response as `T`.
    fn post_json<T: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &impl Serialize,
    ) -> Result<T> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let payload = serde_json::to_string(body)?;
        let attempts = self.config.retries + 1;
        let mut last_transport = String::new();
        for _ in 0..attempts {
            let mut request = self
                .agent
                .post(&url)
                .header("content-type", "application/json");
            if let Some(token) = &self.config.auth_token {
                request = request.header("authorization", format!("Bearer {token}"));
            }
            match request.send(payload.as_str()) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if (400..500).contains(&status) {
                        return Err(Error::Protocol(format!("{url} answered {status}")));
                    }
                    if status >= 500 {
                        last_transport = format!("{url} answered {status}");
                        continue;
                    }
                    let text = response
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| Error::Transport(format!("reading {url}: {e}")))?;
                    return serde_json::from_str(&text)
                        .map_err(|e| Error::Protocol(format!("malformed body from {url}: {e}")));
                }
                Err(e) => {
                    last_transport = format!("{url}: {e}");
                    continue;
                }
            }
        }
        Err(Error::Transport(format!(
            "{last_transport} (after {attempts} attempts)"
        )))
    }

    /// Interpret optional wire values, enforcing the truncation-mass bound
    /// when `check_mass` is set.
    fn expand_optional(&self, values: Vec<Option<f64>>, check_mass: bool) -> Result<Vec<f64>> {
        if check_mass && values.iter().any(|v| v.is_none()) {
            let present: f64 = values.iter().flatten().map(|v| v.exp()).sum();
            let remainder = 1.0 - present;
            if remainder > self.config.max_truncation_mass {
                return Err(Error::Fidelity(format!(
                    "truncated response leaves {remainder:.3e} probability mass unaccounted"
                )));
            }
        }
        Ok(values
            .into_iter()
            .map(|v| v.unwrap_or(f64::NEG_INFINITY))
            .collect())
    }
}

impl LanguageModel for RemoteModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn label(&self) -> &str {
        &self.config.model_name
    }

    fn logprobs(&self, context: &[Token]) -> Result<LogProbVector> {
        self.vocab.validate_context(context)?;
        let response: LogprobsResponse = self.post_json(
            "logprobs",
            &LogprobsRequest {
                model: &self.config.model_name,
                context,
            },
        )?;
        if response.logprobs.len() != self.vocab.size() as usize {
            return Err(Error::Protocol(format!(
                "{} log-probabilities for vocabulary of size {}",
                response.logprobs.len(),
                self.vocab.size()
            )));
        }
        let values = self.expand_optional(response.logprobs, true)?;
        self.passes.fetch_add(1, Ordering::Relaxed);
        // Servers may send unnormalized values; restore the invariant.
        LogProbVector::renormalized(values)
    }

    fn score_continuation(&self, context: &[Token], continuation: &[Token]) -> Result<Vec<f64>> {
        if continuation.is_empty() {
            return Err(Error::Input("empty continuation".into()));
        }
        self.vocab.validate_context(context)?;
        self.vocab.validate_tokens(continuation)?;
        let response: ScoreResponse = self.post_json(
            "score",
            &ScoreRequest {
                model: &self.config.model_name,
                context,
                continuation,
            },
        )?;
        if response.token_logprobs.len() != continuation.len() {
            return Err(Error::Protocol(format!(
                "{} scores for a continuation of length {}",
                response.token_logprobs.len(),
                continuation.len()
            )));
        }
        self.passes.fetch_add(1, Ordering::Relaxed);
        self.expand_optional(response.token_logprobs, false)
    }

    fn forward_passes(&self) -> u64 {
        self.passes.load(Ordering::Relaxed)
    }

    fn reset_forward_passes(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_validation() {
        let mut cfg = EndpointConfig::new("http://localhost:1", "m");
        assert!(cfg.validate().is_ok());
        cfg.retries = 6;
        assert!(cfg.validate().is_err());
        cfg.retries = 0;
        cfg.timeout_secs = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_continuation_fails_before_any_request() {
        // Port 1 is never listening; an issued request would be a transport
        // error, an input error proves we bailed first.
        let model = RemoteModel::new(
            EndpointConfig::new("http://127.0.0.1:1", "m"),
            Vocabulary::new(4, 3).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            model.score_continuation(&[0], &[]),
            Err(Error::Input(_))
        ));
        assert_eq!(model.forward_passes(), 0);
    }
}

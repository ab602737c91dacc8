//! Completions endpoint client and retry policy.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Server root, e.g. `http://localhost:8000`; `/v1/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_concurrency: usize,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    /// Number of next-token alternatives to request.
    #[serde(default = "default_top_k")]
    pub top_logprobs: usize,
}

fn default_top_k() -> usize {
    20
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            timeout: Duration::from_secs(60),
            max_concurrency: 4,
            auth_env: None,
            top_logprobs: default_top_k(),
        }
    }

    pub fn validate(&self) -> Result<(), FetchError> {
        if self.max_concurrency == 0 {
            return Err(FetchError::Config("max_concurrency must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(FetchError::Config("timeout must be positive".into()));
        }
        if self.top_logprobs == 0 {
            return Err(FetchError::Config("top_logprobs must be at least 1".into()));
        }
        if self.base_url.is_empty() {
            return Err(FetchError::Config("base_url is empty".into()));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/v1/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/completions")
        } else {
            format!("{base}/v1/completions")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FetchError {
    #[error("endpoint config: {0}")]
    Config(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl FetchError {
    /// Transport failures, rate limiting and server errors are retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) => true,
            Self::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Anything that returns the next-token log-probability table for a prompt.
pub trait LogProbSource: Sync {
    fn next_token_logprobs(&self, prompt: &str) -> Result<BTreeMap<String, f64>, FetchError>;
}

impl<T: LogProbSource + ?Sized> LogProbSource for &T {
    fn next_token_logprobs(&self, prompt: &str) -> Result<BTreeMap<String, f64>, FetchError> {
        (**self).next_token_logprobs(prompt)
    }
}

/// Client for the OpenAI-style `/v1/completions` route with `logprobs`.
pub struct CompletionsClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    token: Option<String>,
}

impl CompletionsClient {
    pub fn new(config: EndpointConfig) -> Result<Self, FetchError> {
        config.validate()?;
        let token = match &config.auth_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| FetchError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent, token })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }
}

impl LogProbSource for CompletionsClient {
    fn next_token_logprobs(&self, prompt: &str) -> Result<BTreeMap<String, f64>, FetchError> {
        let body = json!({
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": self.config.top_logprobs,
        });
        let mut req = self
            .agent
            .post(self.config.completions_url())
            .header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(FetchError::Status { status, body: text });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| FetchError::Protocol(e.to_string()))?;
        parse_top_logprobs(&v)
    }
}

/// Extracts the first position's top-k table from a completions response.
///
/// Accepts the legacy shape (`logprobs.top_logprobs[0]` as a token map) and
/// the list shape (`logprobs.content[0].top_logprobs` as token/logprob
/// objects).
pub fn parse_top_logprobs(response: &Value) -> Result<BTreeMap<String, f64>, FetchError> {
    let lp = response
        .pointer("/choices/0/logprobs")
        .ok_or_else(|| FetchError::Protocol("missing choices[0].logprobs".into()))?;
    let mut out = BTreeMap::new();
    if let Some(map) = lp.pointer("/top_logprobs/0").and_then(Value::as_object) {
        for (tok, v) in map {
            let x = v
                .as_f64()
                .ok_or_else(|| FetchError::Protocol(format!("non-numeric logprob for {tok:?}")))?;
            out.insert(tok.clone(), x);
        }
    } else if let Some(list) = lp.pointer("/content/0/top_logprobs").and_then(Value::as_array) {
        for entry in list {
            let tok = entry.get("token").and_then(Value::as_str);
            let x = entry.get("logprob").and_then(Value::as_f64);
            match (tok, x) {
                (Some(t), Some(x)) => {
                    out.insert(t.to_string(), x);
                }
                _ => return Err(FetchError::Protocol(format!("malformed top_logprobs entry {entry}"))),
            }
        }
    } else {
        return Err(FetchError::Protocol("no top_logprobs table in response".into()));
    }
    Ok(out)
}

/// Bounded exponential backoff: waits `base * 2^k` before retry `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: usize,
    #[serde(with = "secs")]
    pub base_delay: Duration,
    #[serde(with = "secs")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: usize) -> Duration {
        let factor = 1u32.checked_shl(attempt.min(31) as u32).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, FetchError>) -> Result<T, FetchError> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    let wait = self.delay(attempt);
                    log::debug!("retry {} after {:?}: {e}", attempt + 1, wait);
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

//! Text generation over an OpenAI-compatible chat-completions endpoint.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 0.9,
            max_tokens: 256,
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidArgument("max_tokens must be > 0".into()));
        }
        Ok(())
    }

    /// Canonical text form used in cache keys.
    pub fn cache_repr(&self) -> String {
        format!(
            "t={:?};p={:?};m={}",
            self.temperature, self.top_p, self.max_tokens
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub attempts: u32,
    pub latency: Duration,
}

/// Anything that turns a prompt into a completion.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<Generation>;
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<Generation> {
        (**self).generate(prompt, params)
    }
}

/// Bounded exponential backoff: `base * 2^retry`, capped at `max_delay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Default)]
pub struct ClientStats {
    pub calls: AtomicU64,
    pub attempts: AtomicU64,
    pub latency_micros: AtomicU64,
}

pub struct OpenAiClient {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    stats: ClientStats,
}

impl std::fmt::Debug for OpenAiClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiClient")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(String),
    Retry {
        status: Option<u16>,
        message: String,
        after: Option<Duration>,
    },
    Fatal {
        status: Option<u16>,
        message: String,
    },
}

impl OpenAiClient {
    pub fn new(config: &EndpointConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| Error::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self {
            agent,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            api_key,
            retry: config.retry,
            stats: ClientStats::default(),
        })
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    fn request_body(&self, prompt: &str, params: &DecodingParams) -> String {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        })
        .to_string()
    }

    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    status: None,
                    message: e.to_string(),
                    after: None,
                }
            }
        };
        let status = resp.status().as_u16();
        let after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry {
                    status: Some(status),
                    message: format!("reading body: {e}"),
                    after,
                }
            }
        };
        match status {
            200..=299 => match extract_completion(&text) {
                Ok(content) => Attempt::Done(content),
                Err(message) => Attempt::Fatal {
                    status: Some(status),
                    message,
                },
            },
            408 | 409 | 429 | 500..=599 => Attempt::Retry {
                status: Some(status),
                message: truncate(&text, 200),
                after,
            },
            _ => Attempt::Fatal {
                status: Some(status),
                message: truncate(&text, 200),
            },
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_owned(),
    }
}

/// Pulls `choices[0].message.content` (or legacy `choices[0].text`).
fn extract_completion(body: &str) -> std::result::Result<String, String> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| "response has no choices".to_string())?;
    let content = choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(|c| c.as_str())
        .unwrap_or_default();
    Ok(content.to_owned())
}

impl Generator for OpenAiClient {
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<Generation> {
        let body = self.request_body(prompt, params);
        let start = Instant::now();
        let mut attempts = 0u32;
        self.stats.calls.fetch_add(1, Ordering::Relaxed);
        let outcome = loop {
            attempts += 1;
            self.stats.attempts.fetch_add(1, Ordering::Relaxed);
            match self.attempt(&body) {
                Attempt::Done(text) => break Ok(text),
                Attempt::Fatal { status, message } => {
                    break Err(Error::Endpoint {
                        status,
                        attempts,
                        message,
                    })
                }
                Attempt::Retry {
                    status,
                    message,
                    after,
                } => {
                    if attempts > self.retry.max_retries {
                        break Err(Error::Endpoint {
                            status,
                            attempts,
                            message,
                        });
                    }
                    let wait = after
                        .unwrap_or_else(|| self.retry.delay(attempts - 1))
                        .min(self.retry.max_delay);
                    log::warn!(
                        "attempt {attempts} failed ({}), retrying in {wait:?}",
                        status.map_or_else(|| message.clone(), |s| format!("HTTP {s}"))
                    );
                    std::thread::sleep(wait);
                }
            }
        };
        let latency = start.elapsed();
        self.stats
            .latency_micros
            .fetch_add(latency.as_micros() as u64, Ordering::Relaxed);
        log::debug!("generation took {latency:?} over {attempts} attempt(s)");
        let text = outcome?;
        if text.trim().is_empty() {
            return Err(Error::EmptyCompletion);
        }
        Ok(Generation {
            text,
            attempts,
            latency,
        })
    }
}

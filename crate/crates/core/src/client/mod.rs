//! Chat-completion client and the sampling campaign built on it.

pub mod campaign;
pub mod store;

use std::future::Future;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::prompting::ChatMessage;

pub use campaign::{run_campaign, CampaignManifest, CampaignOptions, CampaignOutcome, MissingPair};
pub use store::{load_sample_records, RecordFilter, SampleRecord, SampleStore};

/// Header carrying the sample index. Real endpoints ignore it; the scripted
/// mock endpoint uses it to key its randomness.
pub const SAMPLE_INDEX_HEADER: &str = "x-sample-index";

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_REPETITIONS: u32 = 20;

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    #[serde(with = "duration_ms", rename = "request_timeout_ms")]
    pub request_timeout: Duration,
    pub parallelism: usize,
    /// Name of the environment variable holding the bearer token.
    pub api_key_ref: Option<String>,
    #[serde(with = "duration_ms", rename = "initial_backoff_ms")]
    pub initial_backoff: Duration,
    #[serde(with = "duration_ms", rename = "max_backoff_ms")]
    pub max_backoff: Duration,
}

impl ModelConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_retries: 3,
            request_timeout: Duration::from_secs(60),
            parallelism: 4,
            api_key_ref: None,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ClientError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.parallelism == 0 {
            return Err(ClientError::Config("parallelism must be >= 1".into()));
        }
        if self.model_name.is_empty() {
            return Err(ClientError::Config("model name is empty".into()));
        }
        Ok(())
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.endpoint_url.trim_end_matches('/'))
    }

    /// Backoff before retry number `attempt` (0-based): doubling from
    /// `initial_backoff`, capped at `max_backoff`, scaled by a jitter in
    /// `[0.5, 1.0)`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let base = self
            .initial_backoff
            .saturating_mul(2u32.saturating_pow(attempt))
            .min(self.max_backoff);
        base.mul_f64(rand::rng().random_range(0.5..1.0))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport error after {attempts} attempt(s){}: {message}", .status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
}

/// One sampling request: the rendered prompt plus which sample it is.
#[derive(Debug, Clone, Copy)]
pub struct SampleRequest<'a> {
    pub question_id: &'a str,
    pub sample_index: u32,
    pub messages: &'a [ChatMessage],
}

/// Anything that can answer a sampling request.
pub trait Responder: Send + Sync {
    fn respond(
        &self,
        request: SampleRequest<'_>,
    ) -> impl Future<Output = Result<String, ClientError>> + Send;
}

/// HTTP client for `POST {endpoint}/chat/completions`.
#[derive(Debug, Clone)]
pub struct ChatClient {
    cfg: ModelConfig,
    http: reqwest::Client,
    api_key: Option<String>,
}

enum Attempt {
    Done(String),
    Retry { status: Option<u16>, message: String },
    Fatal(ClientError),
}

impl ChatClient {
    pub fn new(cfg: ModelConfig) -> Result<Self, ClientError> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_ref {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ClientError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let http = reqwest::Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self { cfg, http, api_key })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Sends one request, retrying timeouts, connection failures, 429 and
    /// 5xx up to `max_retries` times.
    pub async fn complete(
        &self,
        messages: &[ChatMessage],
        sample_index: Option<u32>,
    ) -> Result<String, ClientError> {
        if messages.is_empty() {
            return Err(ClientError::Config("empty message list".into()));
        }
        let body = json!({
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": messages,
        });
        let mut attempt = 0;
        loop {
            match self.attempt(&body, sample_index).await {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { status, message } => {
                    if attempt >= self.cfg.max_retries {
                        return Err(ClientError::Transport {
                            status,
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    tracing::debug!(attempt, ?status, %message, "retrying chat request");
                    tokio::time::sleep(self.cfg.backoff(attempt)).await;
                    attempt += 1;
                }
            }
        }
    }

    async fn attempt(&self, body: &Value, sample_index: Option<u32>) -> Attempt {
        let mut req = self.http.post(self.cfg.completions_url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        if let Some(i) = sample_index {
            req = req.header(SAMPLE_INDEX_HEADER, i.to_string());
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    status: None,
                    message: e.to_string(),
                }
            }
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry {
                status: Some(status.as_u16()),
                message: format!("HTTP {status}"),
            };
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Attempt::Fatal(ClientError::Transport {
                status: Some(status.as_u16()),
                attempts: 1,
                message: format!("HTTP {status}: {text}"),
            });
        }
        let bytes = match resp.bytes().await {
            Ok(b) => b,
            Err(e) => {
                return Attempt::Retry {
                    status: Some(status.as_u16()),
                    message: e.to_string(),
                }
            }
        };
        match extract_content(&bytes) {
            Ok(text) => Attempt::Done(text),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

/// `choices[0].message.content` of a chat-completion response body.
pub fn extract_content(body: &[u8]) -> Result<String, ClientError> {
    let v: Value = serde_json::from_slice(body)
        .map_err(|e| ClientError::Protocol(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::Protocol("missing choices[0].message.content".into()))
}

impl Responder for ChatClient {
    async fn respond(&self, request: SampleRequest<'_>) -> Result<String, ClientError> {
        self.complete(request.messages, Some(request.sample_index)).await
    }
}

/// One-shot request with a throwaway client.
pub async fn send_chat_request(
    cfg: &ModelConfig,
    messages: &[ChatMessage],
) -> Result<String, ClientError> {
    ChatClient::new(cfg.clone())?.complete(messages, None).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let mut cfg = ModelConfig::new("http://x", "m");
        cfg.initial_backoff = Duration::from_millis(500);
        cfg.max_backoff = Duration::from_secs(30);
        for attempt in 0..12 {
            let d = cfg.backoff(attempt);
            let base = (500u64 << attempt).min(30_000);
            assert!(d.as_millis() as u64 >= base / 2, "{attempt}: {d:?}");
            assert!((d.as_millis() as u64) < base, "{attempt}: {d:?}");
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::new("http://x", "m");
        assert_eq!(cfg.temperature, 0.7);
        assert!(cfg.validate().is_ok());
        cfg.temperature = -1.0;
        assert!(cfg.validate().is_err());
        cfg.temperature = 0.0;
        cfg.parallelism = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn content_extraction() {
        let ok = br#"{"choices":[{"message":{"role":"assistant","content":"D"}}]}"#;
        assert_eq!(extract_content(ok).unwrap(), "D");
        assert!(matches!(extract_content(b"{}"), Err(ClientError::Protocol(_))));
        assert!(matches!(extract_content(b"<html>"), Err(ClientError::Protocol(_))));
    }

    #[test]
    fn missing_api_key_variable() {
        let mut cfg = ModelConfig::new("http://x", "m");
        cfg.api_key_ref = Some("MCQ_ENTROPY_SURELY_UNSET_VAR".into());
        assert!(matches!(ChatClient::new(cfg), Err(ClientError::Config(_))));
    }
}

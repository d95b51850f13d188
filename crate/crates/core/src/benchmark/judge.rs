//! Judges: a deterministic hash-based mock and a chat-completion HTTP client.

use std::time::Duration;

use base64::Engine as _;
use sha2::{Digest, Sha256};

use super::Dimension;
use crate::pipeline::http::{classify, LazyClient};
use crate::pipeline::{BackendError, RetryPolicy};

pub const PROMPT_VERSION: &str = "v1";
pub const PROMPT_TEMPLATE: &str = include_str!("judge_prompt_v1.txt");

/// Fills the template for one dimension and one user prompt.
pub fn judge_prompt(dim: Dimension, user_prompt: &str) -> String {
    PROMPT_TEMPLATE
        .replace("{dimension}", dim.name())
        .replace("{description}", dim.description())
        .replace("{prompt}", user_prompt)
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("judge reply has no score: {0:?}")]
    NoScore(String),
    #[error("JUDGE_API_KEY is not set")]
    MissingKey,
}

/// Scores a flattened design on one dimension. `sample` is the index of the
/// repeated query (0-based); stateless judges may ignore it.
pub trait JudgeBackend: Sync {
    fn score(&self, png: &[u8], prompt: &str, dim: Dimension, sample: u32) -> Result<u8, JudgeError>;
}

/// Deterministic stand-in: `sha256(png, prompt, dimension, sample) mod 5 + 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockJudge;

impl JudgeBackend for MockJudge {
    fn score(&self, png: &[u8], prompt: &str, dim: Dimension, sample: u32) -> Result<u8, JudgeError> {
        let mut h = Sha256::new();
        h.update(png);
        h.update([0]);
        h.update(prompt.as_bytes());
        h.update([0]);
        h.update(dim.name().as_bytes());
        h.update(sample.to_le_bytes());
        Ok(h.finalize()[0] % 5 + 1)
    }
}

/// First integer in the reply, clamped to 1..=5.
pub fn parse_score(reply: &str) -> Option<u8> {
    let start = reply.find(|c: char| c.is_ascii_digit())?;
    let digits: String = reply[start..].chars().take_while(char::is_ascii_digit).collect();
    let v: u64 = digits.parse().unwrap_or(u64::MAX);
    Some(v.clamp(1, 5) as u8)
}

/// OpenAI-style `chat/completions` client. The key is sent as a bearer token.
pub struct HttpJudge {
    url: String,
    model: String,
    api_key: String,
    temperature: f64,
    retry: RetryPolicy,
    client: LazyClient,
}

impl HttpJudge {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        HttpJudge {
            url: url.into(),
            model: model.into(),
            api_key: api_key.into(),
            temperature: 1.0,
            retry,
            client: LazyClient::new(timeout),
        }
    }

    /// Reads the key from `JUDGE_API_KEY`.
    pub fn from_env(url: impl Into<String>, model: impl Into<String>, timeout: Duration, retry: RetryPolicy) -> Result<Self, JudgeError> {
        let key = std::env::var("JUDGE_API_KEY").map_err(|_| JudgeError::MissingKey)?;
        Ok(Self::new(url, model, key, timeout, retry))
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn request_body(&self, png: &[u8], prompt: &str, dim: Dimension) -> serde_json::Value {
        let image = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png));
        serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{
                "role": "user",
                "content": [
                    { "type": "text", "text": judge_prompt(dim, prompt) },
                    { "type": "image_url", "image_url": { "url": image } }
                ]
            }]
        })
    }
}

impl JudgeBackend for HttpJudge {
    fn score(&self, png: &[u8], prompt: &str, dim: Dimension, _sample: u32) -> Result<u8, JudgeError> {
        let client = self.client.get()?;
        let body = self.request_body(png, prompt, dim);
        let bytes = self
            .retry
            .run("judge", || classify(client.post(&self.url).bearer_auth(&self.api_key).json(&body).send()))?;
        let v: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::Protocol(format!("judge reply: {e}")))?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| BackendError::Protocol("judge reply lacks choices[0].message.content".into()))?;
        parse_score(text).ok_or_else(|| JudgeError::NoScore(text.chars().take(80).collect()))
    }
}

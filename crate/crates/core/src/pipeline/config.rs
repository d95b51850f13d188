//! Backend endpoint configuration: a TOML file, then environment overrides.
//!
//! ```toml
//! pm_url = "http://127.0.0.1:9001/predict"
//! bm_url = "http://127.0.0.1:9002/generate"
//! timeout_ms = 30000
//! attempts = 3
//! backoff_ms = 500
//! ```
//!
//! Environment: `PM_URL`, `BM_URL`, `BACKEND_TIMEOUT_MS`.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BmBackend, HttpBm, HttpPm, MockBm, MockPm, PmBackend, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub pm_url: Option<String>,
    pub bm_url: Option<String>,
    pub timeout_ms: u64,
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig { pm_url: None, bm_url: None, timeout_ms: 30_000, attempts: 3, backoff_ms: 500 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment variable {name}: {message}")]
    Env { name: &'static str, message: String },
}

impl BackendConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// File (if given) then environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|source| ConfigError::Read { path: p.display().to_string(), source })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("PM_URL").filter(|v| !v.is_empty()) {
            self.pm_url = Some(v);
        }
        if let Some(v) = get("BM_URL").filter(|v| !v.is_empty()) {
            self.bm_url = Some(v);
        }
        if let Some(v) = get("BACKEND_TIMEOUT_MS").filter(|v| !v.is_empty()) {
            self.timeout_ms = v
                .parse()
                .map_err(|e: std::num::ParseIntError| ConfigError::Env { name: "BACKEND_TIMEOUT_MS", message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy { attempts: self.attempts, base: Duration::from_millis(self.backoff_ms) }
    }

    /// HTTP client when `pm_url` is set, the mock otherwise.
    pub fn pm(&self) -> Box<dyn PmBackend> {
        match &self.pm_url {
            Some(u) => Box::new(HttpPm::new(u.clone(), self.timeout(), self.retry())),
            None => Box::new(MockPm),
        }
    }

    pub fn bm(&self) -> Box<dyn BmBackend> {
        match &self.bm_url {
            Some(u) => Box::new(HttpBm::new(u.clone(), self.timeout(), self.retry())),
            None => Box::new(MockBm),
        }
    }
}

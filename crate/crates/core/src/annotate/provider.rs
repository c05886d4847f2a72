//! Annotation providers.
//!
//! A provider receives `{task, text, label_set}` and answers with
//! `{label, confidence?, raw}`. Remote LLMs, local zero-shot services and the
//! deterministic stub all sit behind the same trait.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{prompt::serialize_vp, Task, VictimPerpRecord};
use crate::labels::{PerpetratorLabel, VictimLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub task: Task,
    pub text: String,
    pub label_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub raw: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("provider refused: {0}")]
    Refused(String),
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider configuration error: {0}")]
    Config(String),
}

pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn model_version(&self) -> &str;
    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

/// Deterministic provider: the label is a hash of (task, text) over the label set.
#[derive(Debug, Clone)]
pub struct StubProvider {
    id: String,
    seed: u64,
}

impl StubProvider {
    pub fn new(seed: u64) -> Self {
        Self { id: "stub".to_string(), seed }
    }

    fn pick(&self, salt: &str, text: &str, n: usize) -> usize {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(salt.as_bytes());
        h.update(text.as_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(word) % n as u64) as usize
    }
}

impl Provider for StubProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_version(&self) -> &str {
        "stub-1"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        if request.task == Task::Vp {
            let victim = VictimLabel::ALL[self.pick("victim", &request.text, VictimLabel::ALL.len())];
            let perpetrator = PerpetratorLabel::ALL[self.pick("perp", &request.text, PerpetratorLabel::ALL.len())];
            let raw = serialize_vp(&VictimPerpRecord { victim, perpetrator });
            return Ok(ProviderResponse { label: String::new(), confidence: None, raw });
        }
        if request.label_set.is_empty() {
            return Err(ProviderError::Refused("empty label set".into()));
        }
        let label = request.label_set[self.pick(request.task.as_str(), &request.text, request.label_set.len())].clone();
        Ok(ProviderResponse { raw: label.clone(), label, confidence: Some(1.0) })
    }
}

/// JSON-over-HTTPS provider. The API key is read from an environment variable
/// and sent as a bearer token.
pub struct HttpProvider {
    id: String,
    model_version: String,
    endpoint: url::Url,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    max_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    pub id: String,
    pub model_version: String,
    pub endpoint: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

impl HttpProvider {
    pub fn from_config(cfg: &HttpProviderConfig) -> Result<Self, ProviderError> {
        let endpoint = url::Url::parse(&cfg.endpoint).map_err(|e| ProviderError::Config(e.to_string()))?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| ProviderError::Config(format!("environment variable {var} not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            id: cfg.id.clone(),
            model_version: cfg.model_version.clone(),
            endpoint,
            api_key,
            client,
            max_retries: cfg.max_retries,
        })
    }
}

impl Provider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_version(&self) -> &str {
        &self.model_version
    }

    fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let mut last = ProviderError::Transport("no attempt made".into());
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 << attempt.min(6)));
            }
            let mut req = self.client.post(self.endpoint.clone()).json(request);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<ProviderResponse>().map_err(|e| ProviderError::Transport(e.to_string()));
                }
                Ok(resp) if resp.status().is_client_error() && resp.status().as_u16() != 429 => {
                    return Err(ProviderError::Refused(format!("HTTP {}", resp.status())));
                }
                Ok(resp) => last = ProviderError::Transport(format!("HTTP {}", resp.status())),
                Err(e) if e.is_timeout() => last = ProviderError::Timeout,
                Err(e) => last = ProviderError::Transport(e.to_string()),
            }
        }
        Err(last)
    }
}

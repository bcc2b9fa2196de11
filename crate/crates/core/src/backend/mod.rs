//! Language-model backends: sampling completions and scoring text.

pub mod http;
pub mod ngram;
pub mod sampling;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use ngram::{train_ngram, NGramBackend, NGramModel};
pub use sampling::{apply_temperature, nucleus_filter, sample_index};

/// Stop strings used for HumanEval-style function completion.
pub const DEFAULT_STOPS: [&str; 5] = ["\nclass", "\ndef", "\n#", "\nif", "\nprint"];

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("model file {path}: {message}")]
    ModelFile { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub n: usize,
    pub stop: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 256,
            temperature: 1.0,
            top_p: 1.0,
            n: 1,
            stop: Vec::new(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::InvalidRequest(m.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be at least 1");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if self.stop.iter().any(String::is_empty) {
            return bad("stop strings must be non-empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSample {
    pub text: String,
    pub token_logprobs: Vec<(String, f64)>,
    pub finish_reason: FinishReason,
}

impl CompletionSample {
    pub fn check(&self) -> Result<(), BackendError> {
        if let Some((t, lp)) = self.token_logprobs.iter().find(|(_, lp)| !(*lp <= 0.0)) {
            return Err(BackendError::Malformed(format!(
                "token {t:?} has logprob {lp} > 0"
            )));
        }
        let joined: String = self.token_logprobs.iter().map(|(t, _)| t.as_str()).collect();
        if joined != self.text {
            return Err(BackendError::Malformed(
                "token texts do not concatenate to the sample text".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub sum_logprob: f64,
    pub token_count: usize,
}

/// Shared by all evaluation drivers. Implementations must tolerate
/// concurrent calls.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<CompletionSample>, BackendError>;
    fn score_logprobs(&self, text: &str) -> Result<Score, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Ngram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_s: f64,
    /// Name of an environment variable holding a bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> f64 {
    0.5
}

impl BackendConfig {
    pub fn http(url: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            name: None,
            url: Some(url.into()),
            model_file: None,
            timeout_s: default_timeout(),
            retries: default_retries(),
            backoff_s: default_backoff(),
            token_env: None,
        }
    }

    pub fn ngram(model_file: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Ngram,
            model_file: Some(model_file.into()),
            url: None,
            ..Self::http("")
        }
    }

    /// Interpret a command-line `--backend` value: URLs select HTTP,
    /// anything else is a local model file.
    pub fn from_spec(spec: &str) -> Self {
        if spec.starts_with("http://") || spec.starts_with("https://") {
            Self::http(spec)
        } else {
            Self::ngram(spec)
        }
    }
}

pub fn from_config(cfg: &BackendConfig) -> crate::Result<Box<dyn Backend>> {
    match cfg.kind {
        BackendKind::Http => {
            let url = cfg
                .url
                .as_deref()
                .filter(|u| !u.is_empty())
                .ok_or_else(|| crate::Error::Config("backend.url is required for http".into()))?;
            let token = match &cfg.token_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    crate::Error::Config(format!("environment variable {var} is not set"))
                })?),
                None => None,
            };
            let mut b = HttpBackend::new(url)
                .with_timeout(Duration::from_secs_f64(cfg.timeout_s))
                .with_retries(cfg.retries, Duration::from_secs_f64(cfg.backoff_s));
            if let Some(t) = token {
                b = b.with_bearer(t);
            }
            if let Some(n) = &cfg.name {
                b = b.with_name(n.clone());
            }
            Ok(Box::new(b))
        }
        BackendKind::Ngram => {
            let path = cfg.model_file.as_deref().ok_or_else(|| {
                crate::Error::Config("backend.model_file is required for ngram".into())
            })?;
            let mut b = NGramBackend::<f64>::load(path)?;
            if let Some(n) = &cfg.name {
                b.set_name(n.clone());
            }
            Ok(Box::new(b))
        }
    }
}

pub fn load_backend(spec: &str) -> crate::Result<Box<dyn Backend>> {
    from_config(&BackendConfig::from_spec(spec))
}

pub(crate) fn model_file_error(path: &Path, message: impl Into<String>) -> BackendError {
    BackendError::ModelFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = CompletionRequest::new("x");
        assert!(ok.validate().is_ok());
        for bad in [
            CompletionRequest { n: 0, ..ok.clone() },
            CompletionRequest { max_tokens: 0, ..ok.clone() },
            CompletionRequest { top_p: 0.0, ..ok.clone() },
            CompletionRequest { top_p: 1.5, ..ok.clone() },
            CompletionRequest { temperature: 0.0, ..ok.clone() },
            CompletionRequest { stop: vec![String::new()], ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn sample_check() {
        let s = CompletionSample {
            text: "ab".into(),
            token_logprobs: vec![("a".into(), -0.1), ("b".into(), 0.0)],
            finish_reason: FinishReason::Length,
        };
        assert!(s.check().is_ok());
        let mut bad = s.clone();
        bad.token_logprobs[1].1 = 0.2;
        assert!(bad.check().is_err());
        let mut bad = s;
        bad.text = "abc".into();
        assert!(bad.check().is_err());
    }

    #[test]
    fn spec_strings() {
        assert_eq!(BackendConfig::from_spec("http://h:1").kind, BackendKind::Http);
        assert_eq!(BackendConfig::from_spec("m.json").kind, BackendKind::Ngram);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let r: Result<BackendConfig, _> = toml::from_str("kind = \"http\"\nurl = \"x\"\nbogus = 1\n");
        assert!(r.is_err());
        let r: BackendConfig = toml::from_str("kind = \"ngram\"\nmodel_file = \"m.json\"\n").unwrap();
        assert_eq!(r.model_file.as_deref(), Some(Path::new("m.json")));
    }
}

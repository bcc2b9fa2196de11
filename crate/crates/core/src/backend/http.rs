//! JSON-over-HTTP client for externally served models.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, CompletionRequest, CompletionSample, FinishReason, Score};

#[derive(Debug, Serialize)]
struct CompleteBody<'a> {
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    top_p: f64,
    n: usize,
    stop: &'a [String],
    logprobs: bool,
}

#[derive(Debug, Deserialize)]
struct WireSample {
    text: String,
    tokens: Vec<String>,
    token_logprobs: Vec<f64>,
    finish_reason: FinishReason,
}

#[derive(Debug, Deserialize)]
struct CompleteResponse {
    samples: Vec<WireSample>,
}

#[derive(Debug, Serialize)]
struct ScoreBody<'a> {
    text: &'a str,
}

enum Attempt<T> {
    Done(T),
    Fatal(String),
    Retry(String),
}

#[derive(Debug)]
pub struct HttpBackend {
    name: String,
    base_url: String,
    bearer: Option<String>,
    retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        Self {
            name: base_url.clone(),
            base_url,
            bearer: None,
            retries: 3,
            backoff: Duration::from_millis(500),
            agent: agent(Duration::from_secs(60)),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = agent(timeout);
        self
    }

    /// `retries` extra attempts after the first; the wait doubles each time.
    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    pub fn with_bearer(mut self, token: impl Into<String>) -> Self {
        self.bearer = Some(token.into());
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn once<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Attempt<R> {
        let mut req = self.agent.post(url);
        if let Some(t) = &self.bearer {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let mut body = resp.into_body();
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if status >= 400 {
            let text = body.read_to_string().unwrap_or_default();
            return Attempt::Fatal(format!("HTTP {status}: {}", text.trim()));
        }
        match body.read_json::<R>() {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Retry(format!("unreadable body: {e}")),
        }
    }

    /// POST with retries; `check` may reject a decoded body, which counts
    /// as a retryable failure.
    fn post<B, R, T>(&self, path: &str, body: &B, check: impl Fn(R) -> Result<T, String>) -> Result<T, BackendError>
    where
        B: Serialize,
        R: DeserializeOwned,
    {
        let url = format!("{}{}", self.base_url, path);
        let mut last = String::new();
        let mut attempts = 0;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            attempts += 1;
            match self.once::<B, R>(&url, body) {
                Attempt::Done(v) => match check(v) {
                    Ok(t) => return Ok(t),
                    Err(m) => last = m,
                },
                Attempt::Fatal(m) => {
                    return Err(BackendError::Transport { attempts, message: m });
                }
                Attempt::Retry(m) => last = m,
            }
            log::warn!("{url}: attempt {attempts} failed: {last}");
        }
        Err(BackendError::Transport {
            attempts,
            message: last,
        })
    }
}

fn convert(resp: CompleteResponse, n: usize) -> Result<Vec<CompletionSample>, String> {
    if resp.samples.len() != n {
        return Err(format!("expected {n} samples, got {}", resp.samples.len()));
    }
    resp.samples
        .into_iter()
        .map(|w| {
            if w.tokens.len() != w.token_logprobs.len() {
                return Err("tokens and token_logprobs differ in length".to_string());
            }
            let s = CompletionSample {
                text: w.text,
                token_logprobs: w.tokens.into_iter().zip(w.token_logprobs).collect(),
                finish_reason: w.finish_reason,
            };
            s.check().map_err(|e| e.to_string())?;
            Ok(s)
        })
        .collect()
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Vec<CompletionSample>, BackendError> {
        req.validate()?;
        let body = CompleteBody {
            prompt: &req.prompt,
            max_tokens: req.max_tokens,
            temperature: req.temperature,
            top_p: req.top_p,
            n: req.n,
            stop: &req.stop,
            logprobs: true,
        };
        self.post("/v1/complete", &body, |r: CompleteResponse| convert(r, req.n))
    }

    fn score_logprobs(&self, text: &str) -> Result<Score, BackendError> {
        if text.is_empty() {
            return Err(BackendError::InvalidRequest("cannot score empty text".into()));
        }
        self.post("/v1/score", &ScoreBody { text }, |s: Score| {
            if s.sum_logprob <= 0.0 && s.sum_logprob.is_finite() {
                Ok(s)
            } else {
                Err(format!("sum_logprob {} is not a finite non-positive number", s.sum_logprob))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_shape() {
        let stop = vec!["\ndef".to_string()];
        let b = CompleteBody {
            prompt: "p",
            max_tokens: 5,
            temperature: 0.2,
            top_p: 0.95,
            n: 2,
            stop: &stop,
            logprobs: true,
        };
        let v = serde_json::to_value(&b).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"prompt":"p","max_tokens":5,"temperature":0.2,"top_p":0.95,"n":2,"stop":["\ndef"],"logprobs":true})
        );
    }

    #[test]
    fn response_conversion() {
        let r: CompleteResponse = serde_json::from_str(
            r#"{"samples":[{"text":"ab","tokens":["a","b"],"token_logprobs":[-0.5,-0.25],"finish_reason":"length"}]}"#,
        )
        .unwrap();
        let s = convert(r, 1).unwrap();
        assert_eq!(s[0].token_logprobs[1], ("b".to_string(), -0.25));
        let r: CompleteResponse = serde_json::from_str(
            r#"{"samples":[{"text":"ab","tokens":["a"],"token_logprobs":[-0.5],"finish_reason":"stop"}]}"#,
        )
        .unwrap();
        assert!(convert(r, 1).is_err());
    }

    #[test]
    fn trailing_slash_trimmed() {
        assert_eq!(HttpBackend::new("http://h:1/").base_url, "http://h:1");
    }
}

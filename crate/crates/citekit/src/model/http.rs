//! Live clients over the common chat-completion HTTP schema.
//!
//! Request shape: `POST {endpoint}` with JSON body
//! `{"model": …, "messages": [{"role": "user", "content": …}], "temperature": …}`
//! and `Authorization: Bearer {key}` when a key is configured. The scorer
//! uses the completions-style variant with `logprobs` + `echo` instead.
//!
//! Environment variables:
//! - `CITEKIT_ENDPOINT` — chat completion URL
//! - `CITEKIT_API_KEY` — bearer credential (optional)
//! - `CITEKIT_MODEL` — model name
//! - `CITEKIT_SCORER_ENDPOINT` — completions URL with logprob support
//! - `CITEKIT_EMBED_ENDPOINT` — embeddings URL

use super::{EmbedderClient, EntailmentClient, GeneratorClient, ScorerClient};
use crate::error::{Error, Result};
use serde::Deserialize;
use serde_json::{json, Value};
use std::sync::Mutex;
use std::time::Duration;

/// Transport abstraction so retry behavior is testable without a network.
pub trait Transport: Send + Sync {
    /// Returns (status, body).
    fn post_json(&self, url: &str, body: &Value, bearer: Option<&str>) -> Result<(u16, String)>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout_secs: u64) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| Error::Client {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, body: &Value, bearer: Option<&str>) -> Result<(u16, String)> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Client {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| Error::Client {
            attempts: 1,
            message: e.to_string(),
        })?;
        Ok((status, text))
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    /// Runs `call` with exponential backoff on transport failures and
    /// retryable HTTP statuses (429 and 5xx).
    fn run<T>(&self, mut call: impl FnMut() -> Result<(u16, T)>) -> Result<T> {
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match call() {
                Ok((status, value)) if status < 400 => return Ok(value),
                Ok((status, _)) if status == 429 || status >= 500 => {
                    last = format!("http status {status}");
                }
                Ok((status, _)) => {
                    return Err(Error::Client {
                        attempts: attempt,
                        message: format!("http status {status}"),
                    })
                }
                Err(e) => last = e.to_string(),
            }
            if attempt < self.max_attempts {
                let delay = self.base_delay_ms.saturating_mul(1 << (attempt - 1).min(8));
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
        Err(Error::Client {
            attempts: self.max_attempts,
            message: last,
        })
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var("CITEKIT_ENDPOINT")
            .map_err(|_| Error::Config("CITEKIT_ENDPOINT is not set".to_owned()))?;
        let model = std::env::var("CITEKIT_MODEL").unwrap_or_else(|_| "default".to_owned());
        Ok(HttpConfig {
            endpoint,
            model,
            api_key: std::env::var("CITEKIT_API_KEY").ok(),
            temperature: 0.7,
            retry: RetryPolicy::default(),
        })
    }
}

pub struct HttpGenerator {
    pub config: HttpConfig,
    pub transport: Box<dyn Transport>,
}

impl HttpGenerator {
    pub fn from_env() -> Result<Self> {
        Ok(HttpGenerator {
            config: HttpConfig::from_env()?,
            transport: Box::new(ReqwestTransport::new(120)?),
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl GeneratorClient for HttpGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        if prompt.is_empty() {
            return Err(Error::Contract("prompt must be non-empty".to_owned()));
        }
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let text = self.config.retry.run(|| {
            self.transport
                .post_json(&self.config.endpoint, &body, self.config.api_key.as_deref())
        })?;
        let parsed: ChatResponse = serde_json::from_str(&text)?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::Client {
                attempts: 1,
                message: "response had no choices".to_owned(),
            })
    }
}

/// Completions-style scorer: echoes the prompt with token logprobs and sums
/// those belonging to the continuation. Construction fails with a capability
/// error when no scorer endpoint is configured.
pub struct HttpScorer {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    pub transport: Box<dyn Transport>,
}

impl HttpScorer {
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var("CITEKIT_SCORER_ENDPOINT").map_err(|_| {
            Error::Capability(
                "no logprob-capable endpoint configured (set CITEKIT_SCORER_ENDPOINT)".to_owned(),
            )
        })?;
        Ok(HttpScorer {
            endpoint,
            model: std::env::var("CITEKIT_MODEL").unwrap_or_else(|_| "default".to_owned()),
            api_key: std::env::var("CITEKIT_API_KEY").ok(),
            retry: RetryPolicy::default(),
            transport: Box::new(ReqwestTransport::new(120)?),
        })
    }
}

impl ScorerClient for HttpScorer {
    fn score_sequence(&self, context: &str, continuation: &str) -> Result<f64> {
        if continuation.is_empty() {
            return Err(Error::Contract("continuation must be non-empty".to_owned()));
        }
        let full = format!("{context}{continuation}");
        let body = json!({
            "model": self.model,
            "prompt": full,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        });
        let text = self
            .retry
            .run(|| self.transport.post_json(&self.endpoint, &body, self.api_key.as_deref()))?;
        let v: Value = serde_json::from_str(&text)?;
        let lp = &v["choices"][0]["logprobs"];
        let offsets = lp["text_offset"].as_array().ok_or_else(|| {
            Error::Capability("endpoint returned no logprobs".to_owned())
        })?;
        let probs = lp["token_logprobs"].as_array().ok_or_else(|| {
            Error::Capability("endpoint returned no logprobs".to_owned())
        })?;
        let cut = context.len() as u64;
        let mut sum = 0.0;
        for (off, p) in offsets.iter().zip(probs) {
            if off.as_u64().unwrap_or(0) >= cut {
                sum += p.as_f64().unwrap_or(0.0);
            }
        }
        Ok(sum.min(0.0))
    }
}

/// Embeddings endpoint client; vectors are L2-normalized on receipt.
pub struct HttpEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    pub transport: Box<dyn Transport>,
    dim: Mutex<Option<usize>>,
}

impl HttpEmbedder {
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var("CITEKIT_EMBED_ENDPOINT").map_err(|_| {
            Error::Capability("no embedding endpoint configured (set CITEKIT_EMBED_ENDPOINT)".to_owned())
        })?;
        Ok(HttpEmbedder {
            endpoint,
            model: std::env::var("CITEKIT_MODEL").unwrap_or_else(|_| "default".to_owned()),
            api_key: std::env::var("CITEKIT_API_KEY").ok(),
            retry: RetryPolicy::default(),
            transport: Box::new(ReqwestTransport::new(120)?),
            dim: Mutex::new(None),
        })
    }
}

impl EmbedderClient for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        if text.is_empty() {
            return Err(Error::Contract("cannot embed empty text".to_owned()));
        }
        let body = json!({"model": self.model, "input": text});
        let raw = self
            .retry
            .run(|| self.transport.post_json(&self.endpoint, &body, self.api_key.as_deref()))?;
        let v: Value = serde_json::from_str(&raw)?;
        let arr = v["data"][0]["embedding"].as_array().ok_or_else(|| {
            Error::Capability("embedding response missing data[0].embedding".to_owned())
        })?;
        let mut out: Vec<f32> = arr.iter().map(|x| x.as_f64().unwrap_or(0.0) as f32).collect();
        let mut dim = self.dim.lock().unwrap();
        match *dim {
            Some(d) if d != out.len() => {
                return Err(Error::Contract(format!(
                    "embedding dimension changed: {} vs {}",
                    d,
                    out.len()
                )))
            }
            None => *dim = Some(out.len()),
            _ => {}
        }
        let norm: f32 = out.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for x in &mut out {
                *x /= norm;
            }
        }
        Ok(out)
    }

    fn dim(&self) -> usize {
        self.dim.lock().unwrap().unwrap_or(0)
    }
}

/// Entailment routed through a generator with the scoring prompt; expects a
/// bare number in [0, 1] back.
pub struct PromptedEntailment<G: GeneratorClient> {
    pub generator: G,
    pub template: String,
}

impl<G: GeneratorClient> EntailmentClient for PromptedEntailment<G> {
    fn entail(&self, premise: &str, claim: &str) -> Result<f64> {
        let prompt = self
            .template
            .replace("[premise]", premise)
            .replace("[claim]", claim);
        let reply = self.generator.generate(&prompt)?;
        let score: f64 = reply
            .trim()
            .parse()
            .map_err(|_| Error::Client {
                attempts: 1,
                message: format!("unparseable entailment score: {reply:?}"),
            })?;
        Ok(score.clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct FlakyTransport {
        calls: AtomicU32,
        fail_first: u32,
    }

    impl Transport for FlakyTransport {
        fn post_json(&self, _url: &str, _body: &Value, _bearer: Option<&str>) -> Result<(u16, String)> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Ok((429, "slow down".to_owned()))
            } else {
                Ok((
                    200,
                    r#"{"choices":[{"message":{"content":"ok"}}]}"#.to_owned(),
                ))
            }
        }
    }

    fn generator(fail_first: u32, max_attempts: u32) -> HttpGenerator {
        HttpGenerator {
            config: HttpConfig {
                endpoint: "http://unused".to_owned(),
                model: "m".to_owned(),
                api_key: None,
                temperature: 0.0,
                retry: RetryPolicy {
                    max_attempts,
                    base_delay_ms: 1,
                },
            },
            transport: Box::new(FlakyTransport {
                calls: AtomicU32::new(0),
                fail_first,
            }),
        }
    }

    #[test]
    fn retries_once_after_429_then_succeeds() {
        let g = generator(1, 5);
        assert_eq!(g.generate("hi").unwrap(), "ok");
    }

    #[test]
    fn exhausted_retries_is_typed_client_error() {
        let g = generator(10, 3);
        match g.generate("hi") {
            Err(Error::Client { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected client error, got {other:?}"),
        }
    }

    #[test]
    fn non_retryable_status_fails_fast() {
        struct Denied;
        impl Transport for Denied {
            fn post_json(&self, _: &str, _: &Value, _: Option<&str>) -> Result<(u16, String)> {
                Ok((403, "no".to_owned()))
            }
        }
        let g = HttpGenerator {
            config: HttpConfig {
                endpoint: String::new(),
                model: String::new(),
                api_key: None,
                temperature: 0.0,
                retry: RetryPolicy { max_attempts: 5, base_delay_ms: 1 },
            },
            transport: Box::new(Denied),
        };
        match g.generate("hi") {
            Err(Error::Client { attempts, message }) => {
                assert_eq!(attempts, 1);
                assert!(message.contains("403"));
            }
            other => panic!("expected fast failure, got {other:?}"),
        }
    }
}

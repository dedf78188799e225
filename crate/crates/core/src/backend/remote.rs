use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, CacheKey, CallContext, DecodingParams, ModelResponse, ResponseCache};
use crate::prompting::PromptText;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub timeout_secs: u64,
    pub concurrency: usize,
    pub cache_path: Option<PathBuf>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: "MAZE_API_KEY".into(),
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
            timeout_secs: 120,
            concurrency: 4,
            cache_path: None,
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore") += 1;
        self.0.cv.notify_one();
    }
}

/// Client for chat-completions style servers: one user message per prompt.
pub struct ChatCompletionsBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    cache: ResponseCache,
    in_flight: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
    permits: Semaphore,
}

impl ChatCompletionsBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let cache = match &config.cache_path {
            Some(p) => ResponseCache::open(p)?,
            None => ResponseCache::in_memory(),
        };
        Ok(ChatCompletionsBackend {
            permits: Semaphore::new(config.concurrency),
            config,
            client,
            cache,
            in_flight: Mutex::new(HashMap::new()),
        })
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    fn request_body(&self, prompt: &str, params: &DecodingParams) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if let Some(stop) = &params.stop {
            body["stop"] = json!(stop);
        }
        body
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<String, BackendError> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Malformed(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text.chars().take(512).collect(),
            });
        }
        extract_content(&text)
    }

    fn backoff(&self, retry: u32) -> Duration {
        let ms = self
            .config
            .base_delay_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.config.max_delay_ms);
        Duration::from_millis(ms)
    }
}

/// Pulls `choices[0].message.content` out of a response body.
pub(crate) fn extract_content(body: &str) -> Result<String, BackendError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
}

impl Backend for ChatCompletionsBackend {
    fn id(&self) -> String {
        format!("remote:{}@{}", self.config.model, self.config.endpoint)
    }

    fn complete(
        &self,
        prompt: &PromptText,
        params: &DecodingParams,
        _ctx: &CallContext<'_>,
    ) -> Result<ModelResponse, BackendError> {
        let key = CacheKey::new(&self.id(), &prompt.text, params);
        let slot = {
            let mut map = self.in_flight.lock().expect("in-flight map");
            map.entry(key.clone()).or_default().clone()
        };
        // identical concurrent requests wait here and then hit the cache
        let _guard = slot.lock().expect("in-flight slot");

        if let Some(text) = self.cache.get(&key) {
            log::debug!("cache hit {key}");
            return Ok(ModelResponse {
                text,
                backend_id: self.id(),
                latency_ms: 0,
                cached: true,
                attempt: 0,
            });
        }

        let body = self.request_body(&prompt.text, params);
        let _permit = self.permits.acquire();
        let started = Instant::now();
        let mut retry = 0u32;
        let text = loop {
            match self.send_once(&body) {
                Ok(text) => break text,
                Err(err) => {
                    if !err.is_transient() {
                        return Err(err);
                    }
                    if retry >= self.config.max_retries {
                        return Err(BackendError::RetriesExhausted {
                            attempts: retry + 1,
                            last: err.to_string(),
                        });
                    }
                    log::warn!("request {key} failed (attempt {}), retrying: {err}", retry + 1);
                    std::thread::sleep(self.backoff(retry));
                    retry += 1;
                }
            }
        };
        let latency_ms = (started.elapsed().as_millis() as u64).max(1);
        self.cache.insert(&key, &text)?;
        Ok(ModelResponse {
            text,
            backend_id: self.id(),
            latency_ms,
            cached: false,
            attempt: retry,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        let body = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"[0], [1]"}}]}"#;
        assert_eq!(extract_content(body).unwrap(), "[0], [1]");
        assert!(matches!(extract_content(r#"{"choices":[]}"#), Err(BackendError::Malformed(_))));
        assert!(matches!(extract_content("nope"), Err(BackendError::Malformed(_))));
    }

    #[test]
    fn backoff_is_capped() {
        let b = ChatCompletionsBackend::new(RemoteConfig {
            base_delay_ms: 100,
            max_delay_ms: 1000,
            ..RemoteConfig::default()
        })
        .unwrap();
        let d: Vec<u64> = (0..6).map(|r| b.backoff(r).as_millis() as u64).collect();
        assert_eq!(d, vec![100, 200, 400, 800, 1000, 1000]);
    }
}

//! OpenAI-compatible chat-completions transport. Requests carry exactly the
//! model name and a single user message - no sampling-parameter overrides.
//! Transient failures (connect errors, timeouts, 429, 5xx) retry with
//! exponential backoff plus jitter; auth rejections fail immediately.

use std::time::{Duration, Instant};

use serde_json::json;

use super::{Backend, BackendResponse, GatewayError};
use crate::prompting::PromptBundle;

pub struct HttpBackend {
    base_url: String,
    model: String,
    api_key_env: String,
    max_retries: u32,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(
        base_url: String,
        model: String,
        api_key_env: String,
        timeout_secs: u64,
        max_retries: u32,
    ) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs)))
            .http_status_as_error(false)
            .build();
        HttpBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            model,
            api_key_env,
            max_retries,
            agent: config.into(),
        }
    }

    fn backoff(attempt: u32) -> Duration {
        let base = 250u64.saturating_mul(1 << attempt.min(6));
        let jitter = (Instant::now().elapsed().subsec_nanos() as u64)
            .wrapping_add(std::process::id() as u64)
            % 125;
        Duration::from_millis(base + jitter)
    }
}

fn extract_assistant_text(body: &str) -> Result<String, String> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| "response lacks choices[0].message.content".to_string())
}

impl Backend for HttpBackend {
    fn descriptor(&self) -> String {
        format!("http:{}", self.model)
    }

    fn complete(
        &self,
        prompt_text: &str,
        _bundle: &PromptBundle,
    ) -> Result<BackendResponse, GatewayError> {
        let api_key = std::env::var(&self.api_key_env)
            .map_err(|_| GatewayError::MissingApiKey(self.api_key_env.clone()))?;
        let url = format!("{}/chat/completions", self.base_url);
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt_text}],
        });

        let started = Instant::now();
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Self::backoff(attempt - 1));
            }
            let result = self
                .agent
                .post(&url)
                .header("authorization", &format!("Bearer {api_key}"))
                .header("content-type", "application/json")
                .send(body.to_string());
            match result {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    let text = response
                        .body_mut()
                        .read_to_string()
                        .unwrap_or_default();
                    match status {
                        200..=299 => {
                            return extract_assistant_text(&text)
                                .map(|content| BackendResponse {
                                    text: content,
                                    latency_ms: started.elapsed().as_millis() as u64,
                                    transport_retries: attempt,
                                })
                                .map_err(|detail| GatewayError::Transport {
                                    attempts: attempt + 1,
                                    last: detail,
                                });
                        }
                        401 | 403 => {
                            return Err(GatewayError::Credential(format!(
                                "HTTP {status}: {}",
                                text.chars().take(200).collect::<String>()
                            )));
                        }
                        429 | 500..=599 => {
                            last_error = format!("HTTP {status}");
                        }
                        other => {
                            return Err(GatewayError::Transport {
                                attempts: attempt + 1,
                                last: format!(
                                    "HTTP {other}: {}",
                                    text.chars().take(200).collect::<String>()
                                ),
                            });
                        }
                    }
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(GatewayError::Transport { attempts: self.max_retries + 1, last: last_error })
    }
}

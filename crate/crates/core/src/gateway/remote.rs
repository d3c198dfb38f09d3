use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendConfig, BackendKind, CompletionBackend, CompletionOutcome, GatewayError, DEFAULT_MODEL};
use crate::prompt::TurnPayload;

/// OpenAI-compatible chat-completion client with deterministic decoding.
///
/// Retries transport failures and 5xx responses with exponential backoff;
/// 401/403 fail immediately as `AuthFailure` and other 4xx are not retried.
pub struct RemoteBackend {
    config: BackendConfig,
}

enum Failure {
    Retryable(GatewayError),
    Final(GatewayError),
}

impl RemoteBackend {
    pub fn new(config: BackendConfig) -> Self {
        Self { config }
    }

    fn request_body(&self, payload: &TurnPayload) -> Value {
        json!({
            "model": self.config.model.as_deref().unwrap_or(DEFAULT_MODEL),
            "temperature": 0,
            "messages": [
                {"role": "system", "content": payload.system_prompt},
                {"role": "user", "content": payload.user_message()},
            ],
        })
    }

    fn attempt(
        &self,
        client: &reqwest::blocking::Client,
        endpoint: &str,
        key: &str,
        body: &Value,
        attempts: u32,
    ) -> Result<String, Failure> {
        let resp = client.post(endpoint).bearer_auth(key).json(body).send().map_err(|e| {
            if e.is_timeout() {
                Failure::Retryable(GatewayError::Timeout { attempts })
            } else {
                Failure::Retryable(GatewayError::Transport { attempts, message: e.to_string() })
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Failure::Final(GatewayError::AuthFailure(format!("endpoint returned {status}"))));
        }
        if status.is_server_error() {
            return Err(Failure::Retryable(GatewayError::Transport {
                attempts,
                message: format!("endpoint returned {status}"),
            }));
        }
        if !status.is_success() {
            return Err(Failure::Final(GatewayError::Transport {
                attempts,
                message: format!("endpoint returned {status}"),
            }));
        }
        let value: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                Failure::Retryable(GatewayError::Timeout { attempts })
            } else {
                Failure::Final(GatewayError::Transport { attempts, message: format!("unreadable body: {e}") })
            }
        })?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| {
                Failure::Final(GatewayError::Transport {
                    attempts,
                    message: "response has no choices[0].message.content".into(),
                })
            })
    }
}

impl CompletionBackend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn complete(&self, payload: &TurnPayload) -> Result<CompletionOutcome, GatewayError> {
        self.config.validate()?;
        let endpoint = self.config.endpoint.as_deref().expect("validated");
        let var = self.config.credential_env.as_deref().expect("validated");
        let key = std::env::var(var)
            .map_err(|_| GatewayError::AuthFailure(format!("credential variable {var} is not set")))?;
        // Built per call: the blocking client owns a runtime and must be
        // created and dropped off any async executor.
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let body = self.request_body(payload);
        let start = Instant::now();
        let max_attempts = self.config.max_retries + 1;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&client, endpoint, &key, &body, attempts) {
                Ok(raw_text) => {
                    return Ok(CompletionOutcome {
                        raw_text,
                        latency_ms: start.elapsed().as_millis() as u64,
                        attempt_count: attempts,
                        backend: BackendKind::Remote,
                    })
                }
                Err(Failure::Final(e)) => return Err(e),
                Err(Failure::Retryable(e)) if attempts >= max_attempts => return Err(e),
                Err(Failure::Retryable(e)) => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                    tracing::warn!(attempt = attempts, error = %e, delay_ms = delay, "retrying model request");
                    std::thread::sleep(Duration::from_millis(delay));
                }
            }
        }
    }
}

//! Pluggable completion backends.
//!
//! [`RemoteBackend`] talks to a chat-completion endpoint over HTTPS;
//! [`ScriptedBackend`] and [`ReplayBackend`] are deterministic and offline.
//! Every backend returns the model's text verbatim: interpreting it is the
//! grounding layer's job, so no backend ever retries because of content.

mod remote;
mod replay;
mod scripted;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures::FixtureSource;
use crate::prompt::TurnPayload;

pub use remote::RemoteBackend;
pub use replay::{record, RecordStore, RecordingBackend, Recording, ReplayBackend};
pub use scripted::{normalize_query, ScriptFile, ScriptEntry, ScriptedBackend};

/// Environment variable holding the API key unless configured otherwise.
pub const DEFAULT_CREDENTIAL_ENV: &str = "INSIGHT_API_KEY";
/// OpenAI-compatible chat-completions endpoint for Gemini.
pub const DEFAULT_ENDPOINT: &str = "https://generativelanguage.googleapis.com/v1beta/openai/chat/completions";
pub const DEFAULT_MODEL: &str = "gemini-2.0-flash";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Remote,
    Scripted,
    RecordReplay,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Remote => "remote",
            BackendKind::Scripted => "scripted",
            BackendKind::RecordReplay => "record-replay",
        })
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(BackendKind::Remote),
            "scripted" => Ok(BackendKind::Scripted),
            "record-replay" | "replay" => Ok(BackendKind::RecordReplay),
            other => Err(format!("unknown backend `{other}` (expected remote, scripted or replay)")),
        }
    }
}

fn default_timeout() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    250
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Name of the environment variable that holds the credential. The
    /// credential itself never appears in configuration.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Base delay of the exponential backoff between retries.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Scripted replies or replay store.
    #[serde(default)]
    pub script_path: Option<PathBuf>,
}

impl BackendConfig {
    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            model: Some(DEFAULT_MODEL.to_owned()),
            credential_env: Some(DEFAULT_CREDENTIAL_ENV.to_owned()),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            script_path: None,
        }
    }

    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        Self { kind: BackendKind::Scripted, endpoint: None, credential_env: None, model: None, script_path: Some(path.into()), ..Self::remote("") }
    }

    pub fn replay(path: impl Into<PathBuf>) -> Self {
        Self { kind: BackendKind::RecordReplay, ..Self::scripted(path) }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::Remote => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("remote backend requires an endpoint".into()));
                }
                if self.credential_env.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::Config("remote backend requires a credential variable".into()));
                }
            }
            BackendKind::Scripted | BackendKind::RecordReplay => {
                if self.script_path.is_none() {
                    return Err(GatewayError::Config(format!("{} backend requires a script path", self.kind)));
                }
            }
        }
        if self.timeout_secs == 0 {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("model request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("credential rejected: {0}")]
    AuthFailure(String),
    #[error("no scripted reply for screen `{screen_id}` and query {query:?}")]
    ScriptExhausted { screen_id: String, query: Option<String> },
    #[error("record store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Calls made before giving up; zero for errors raised before any call.
    pub fn attempts(&self) -> u32 {
        match self {
            GatewayError::Timeout { attempts } | GatewayError::Transport { attempts, .. } => *attempts,
            GatewayError::AuthFailure(_) | GatewayError::ScriptExhausted { .. } => 1,
            GatewayError::StoreUnavailable(_) | GatewayError::Config(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionOutcome {
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub backend: BackendKind,
}

pub trait CompletionBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Blocking; bounded by the backend's deadline.
    fn complete(&self, payload: &TurnPayload) -> Result<CompletionOutcome, GatewayError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn kind(&self) -> BackendKind {
        (**self).kind()
    }

    fn complete(&self, payload: &TurnPayload) -> Result<CompletionOutcome, GatewayError> {
        (**self).complete(payload)
    }
}

/// Builds a backend from configuration. Relative script paths that do not
/// exist on disk are looked up in `fixtures` (e.g. `scripts/phone.json`).
pub fn build_backend(
    config: &BackendConfig,
    fixtures: &dyn FixtureSource,
) -> Result<Arc<dyn CompletionBackend>, GatewayError> {
    config.validate()?;
    let read_script = |path: &PathBuf| -> Result<String, GatewayError> {
        std::fs::read_to_string(path).or_else(|e| {
            fixtures
                .read(&path.to_string_lossy())
                .map_err(|_| GatewayError::Config(format!("{}: {e}", path.display())))
        })
    };
    Ok(match config.kind {
        BackendKind::Remote => Arc::new(RemoteBackend::new(config.clone())),
        BackendKind::Scripted => {
            let path = config.script_path.as_ref().expect("validated");
            Arc::new(ScriptedBackend::from_json(&read_script(path)?)?)
        }
        BackendKind::RecordReplay => {
            let path = config.script_path.as_ref().expect("validated");
            Arc::new(ReplayBackend::from_jsonl(&read_script(path)?)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(BackendConfig::remote("https://example.test/v1").validate().is_ok());
        let mut c = BackendConfig::remote("");
        assert!(c.validate().is_err());
        c.endpoint = Some("https://example.test".into());
        c.credential_env = None;
        assert!(c.validate().is_err());
        assert!(BackendConfig::scripted("x.json").validate().is_ok());
        let mut s = BackendConfig::scripted("x.json");
        s.script_path = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn config_defaults_from_json() {
        let c: BackendConfig = serde_json::from_str(r#"{"kind":"remote","endpoint":"https://e","credential_env":"K"}"#).unwrap();
        assert_eq!(c.timeout_secs, 30);
        assert_eq!(c.max_retries, 2);
        assert!(serde_json::from_str::<BackendConfig>(r#"{"kind":"remote","api_key":"secret"}"#).is_err());
    }
}

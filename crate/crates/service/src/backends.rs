use std::path::PathBuf;
use std::sync::Arc;

use insight_core::device::Scenario;
use insight_core::fixtures::FixtureSource;
use insight_core::gateway::{
    BackendConfig, BackendKind, CompletionBackend, GatewayError, RemoteBackend, ReplayBackend, ScriptedBackend,
    DEFAULT_ENDPOINT,
};

/// How sessions get their model backend.
#[derive(Debug, Clone)]
pub struct BackendSettings {
    pub default_kind: BackendKind,
    /// Template for remote sessions.
    pub remote: BackendConfig,
    /// Overrides the scenario's own reply script or recording.
    pub script_override: Option<PathBuf>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self { default_kind: BackendKind::Scripted, remote: BackendConfig::remote(DEFAULT_ENDPOINT), script_override: None }
    }
}

fn read(source: &dyn FixtureSource, override_path: Option<&PathBuf>, fallback: &str) -> Result<String, GatewayError> {
    match override_path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| GatewayError::Config(format!("{}: {e}", p.display()))),
        None => source.read(fallback).map_err(|e| GatewayError::Config(format!("{fallback}: {e}"))),
    }
}

/// Fresh backend for one session. Scripted sessions read
/// `scripts/<scenario script>.json`; replay sessions read
/// `recordings/<scenario id>.jsonl`.
pub fn backend_for(
    kind: BackendKind,
    scenario: &Scenario,
    source: &dyn FixtureSource,
    settings: &BackendSettings,
) -> Result<Arc<dyn CompletionBackend>, GatewayError> {
    let over = settings.script_override.as_ref();
    Ok(match kind {
        BackendKind::Remote => {
            settings.remote.validate()?;
            Arc::new(RemoteBackend::new(settings.remote.clone()))
        }
        BackendKind::Scripted => {
            let name = scenario.script.as_deref().unwrap_or("phone");
            Arc::new(ScriptedBackend::from_json(&read(source, over, &format!("scripts/{name}.json"))?)?)
        }
        BackendKind::RecordReplay => {
            Arc::new(ReplayBackend::from_jsonl(&read(source, over, &format!("recordings/{}.jsonl", scenario.id))?)?)
        }
    })
}

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{BackendKind, CompletionBackend, CompletionOutcome, GatewayError};
use crate::prompt::TurnPayload;

/// One line of a recording store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recording {
    pub payload_hash: String,
    pub screen_id: String,
    pub user_query: Option<String>,
    pub raw_text: String,
    pub latency_ms: u64,
    pub backend: BackendKind,
}

/// Append-only line-delimited store. Writes are serialized; each record is
/// written with a single `write_all` so a crash cannot tear earlier lines.
#[derive(Debug)]
pub struct RecordStore {
    path: PathBuf,
    lock: Mutex<()>,
}

impl RecordStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), lock: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, rec: &Recording) -> Result<(), GatewayError> {
        let mut line = serde_json::to_string(rec).expect("recording serializes");
        line.push('\n');
        let _guard = self.lock.lock().unwrap();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| GatewayError::StoreUnavailable(format!("{}: {e}", self.path.display())))?;
        f.write_all(line.as_bytes())
            .map_err(|e| GatewayError::StoreUnavailable(format!("{}: {e}", self.path.display())))
    }

    pub fn load(&self) -> Result<Vec<Recording>, GatewayError> {
        let text = std::fs::read_to_string(&self.path)
            .map_err(|e| GatewayError::StoreUnavailable(format!("{}: {e}", self.path.display())))?;
        parse_lines(&text)
    }
}

fn parse_lines(text: &str) -> Result<Vec<Recording>, GatewayError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| GatewayError::Config(format!("recording line {}: {e}", i + 1)))
        })
        .collect()
}

/// Appends one record keyed by the payload's content hash.
pub fn record(payload: &TurnPayload, outcome: &CompletionOutcome, store: &RecordStore) -> Result<(), GatewayError> {
    store.append(&Recording {
        payload_hash: payload.content_hash(),
        screen_id: payload.screen_id.clone(),
        user_query: payload.user_query.clone(),
        raw_text: outcome.raw_text.clone(),
        latency_ms: outcome.latency_ms,
        backend: outcome.backend,
    })
}

/// Serves stored replies for payloads whose hash was recorded; anything else
/// is `ScriptExhausted`. Strict: any prompt or screen change misses.
pub struct ReplayBackend {
    by_hash: HashMap<String, Recording>,
}

impl ReplayBackend {
    pub fn new(records: Vec<Recording>) -> Self {
        // Later lines win, so re-recording a payload overrides the old reply.
        let by_hash = records.into_iter().map(|r| (r.payload_hash.clone(), r)).collect();
        Self { by_hash }
    }

    pub fn from_jsonl(text: &str) -> Result<Self, GatewayError> {
        Ok(Self::new(parse_lines(text)?))
    }

    pub fn len(&self) -> usize {
        self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hash.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::RecordReplay
    }

    fn complete(&self, payload: &TurnPayload) -> Result<CompletionOutcome, GatewayError> {
        let start = Instant::now();
        let rec = self.by_hash.get(&payload.content_hash()).ok_or_else(|| GatewayError::ScriptExhausted {
            screen_id: payload.screen_id.clone(),
            query: payload.user_query.clone(),
        })?;
        Ok(CompletionOutcome {
            raw_text: rec.raw_text.clone(),
            latency_ms: start.elapsed().as_millis() as u64,
            attempt_count: 1,
            backend: BackendKind::RecordReplay,
        })
    }
}

/// Passes calls through to another backend and records every success.
pub struct RecordingBackend {
    inner: Arc<dyn CompletionBackend>,
    store: RecordStore,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn CompletionBackend>, store: RecordStore) -> Self {
        Self { inner, store }
    }
}

impl CompletionBackend for RecordingBackend {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn complete(&self, payload: &TurnPayload) -> Result<CompletionOutcome, GatewayError> {
        let outcome = self.inner.complete(payload)?;
        record(payload, &outcome, &self.store)?;
        Ok(outcome)
    }
}

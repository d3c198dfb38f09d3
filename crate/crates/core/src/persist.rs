//! Session transcripts on disk: line-delimited JSON, one turn per line.
//!
//! Every line repeats the session header so a file can be rebuilt from any
//! prefix. Lines are appended with a single write each; a crash can at worst
//! leave one partial trailing line, which the loader skips.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::BackendKind;
use crate::orchestrator::{SessionRecord, TurnRecord};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("session store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("{file}:{line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("{0} holds no turns")]
    Empty(String),
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    session_id: String,
    scenario_id: String,
    backend: BackendKind,
    started_at_ms: u64,
    turn: T,
}

/// `<dir>/<session_id>-<start ms>.jsonl`
pub fn session_path(record: &SessionRecord, dir: &Path) -> PathBuf {
    dir.join(format!("{}-{}.jsonl", record.session_id, record.started_at_ms))
}

fn line_for(record: &SessionRecord, turn: &TurnRecord) -> String {
    let line = Line {
        session_id: record.session_id.clone(),
        scenario_id: record.scenario_id.clone(),
        backend: record.backend,
        started_at_ms: record.started_at_ms,
        turn,
    };
    let mut s = serde_json::to_string(&line).expect("turn serializes");
    s.push('\n');
    s
}

fn unavailable(path: &Path, e: std::io::Error) -> PersistError {
    PersistError::StoreUnavailable(format!("{}: {e}", path.display()))
}

/// Appends one turn to the session's file, creating it on first use.
pub fn append_turn(record: &SessionRecord, turn: &TurnRecord, dir: &Path) -> Result<PathBuf, PersistError> {
    let path = session_path(record, dir);
    let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| unavailable(&path, e))?;
    f.write_all(line_for(record, turn).as_bytes()).map_err(|e| unavailable(&path, e))?;
    Ok(path)
}

/// Writes the whole transcript, replacing any earlier file for the session.
pub fn persist_session(record: &SessionRecord, dir: &Path) -> Result<PathBuf, PersistError> {
    let path = session_path(record, dir);
    let body: String = record.turns.iter().map(|t| line_for(record, t)).collect();
    let tmp = path.with_extension("jsonl.tmp");
    std::fs::write(&tmp, body).map_err(|e| unavailable(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| unavailable(&path, e))?;
    Ok(path)
}

pub fn load_session(path: &Path) -> Result<SessionRecord, PersistError> {
    let text = std::fs::read_to_string(path).map_err(|e| unavailable(path, e))?;
    let file = path.display().to_string();
    let mut record: Option<SessionRecord> = None;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (i, raw) in lines.iter().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: Line<TurnRecord> = match serde_json::from_str(raw) {
            Ok(l) => l,
            Err(_) if !complete && i + 1 == lines.len() => break,
            Err(e) => return Err(PersistError::Corrupt { file, line: i + 1, message: e.to_string() }),
        };
        let rec = record.get_or_insert_with(|| SessionRecord {
            session_id: parsed.session_id.clone(),
            scenario_id: parsed.scenario_id.clone(),
            backend: parsed.backend,
            started_at_ms: parsed.started_at_ms,
            turns: Vec::new(),
        });
        if parsed.session_id != rec.session_id {
            return Err(PersistError::Corrupt { file, line: i + 1, message: "mixed sessions".into() });
        }
        rec.turns.push(parsed.turn);
    }
    record.ok_or(PersistError::Empty(file))
}

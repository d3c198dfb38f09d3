use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendKind, CompletionBackend, CompletionOutcome, GatewayError};
use crate::prompt::TurnPayload;

/// Lowercased, whitespace-collapsed, trailing punctuation removed. `None` maps to "".
pub fn normalize_query(query: Option<&str>) -> String {
    let q = query.unwrap_or("").to_lowercase();
    let collapsed = q.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(['.', '?', '!', ',']).trim_end().to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub screen_id: String,
    #[serde(default)]
    pub query: Option<String>,
    /// Reply returned on every matching call. A string is returned verbatim;
    /// anything else is serialized as compact JSON.
    #[serde(default)]
    pub reply: Option<Value>,
    /// Replies returned in order, one per call; exhausted afterwards.
    #[serde(default)]
    pub replies: Option<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    pub entries: Vec<ScriptEntry>,
}

fn raw(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => serde_json::to_string(other).expect("value serializes"),
    }
}

enum Replies {
    Fixed(String),
    Sequence(Vec<String>),
}

/// Replies keyed by `(screen_id, normalized query)`, independent of prompt wording.
pub struct ScriptedBackend {
    replies: HashMap<(String, String), Replies>,
    cursors: Mutex<HashMap<(String, String), usize>>,
    calls: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(script: ScriptFile) -> Result<Self, GatewayError> {
        let mut replies = HashMap::new();
        for e in script.entries {
            let key = (e.screen_id.clone(), normalize_query(e.query.as_deref()));
            let r = match (e.reply, e.replies) {
                (Some(v), None) => Replies::Fixed(raw(&v)),
                (None, Some(vs)) => Replies::Sequence(vs.iter().map(raw).collect()),
                _ => {
                    return Err(GatewayError::Config(format!(
                        "script entry for {:?} needs exactly one of reply/replies",
                        key
                    )))
                }
            };
            if replies.insert(key.clone(), r).is_some() {
                return Err(GatewayError::Config(format!("duplicate script entry for {key:?}")));
            }
        }
        Ok(Self { replies, cursors: Mutex::new(HashMap::new()), calls: Mutex::new(0) })
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let script: ScriptFile =
            serde_json::from_str(text).map_err(|e| GatewayError::Config(format!("script file: {e}")))?;
        Self::new(script)
    }

    /// Total `complete` calls so far, including exhausted ones.
    pub fn call_count(&self) -> usize {
        *self.calls.lock().unwrap()
    }

    fn lookup(&self, screen_id: &str, query: Option<&str>) -> Option<String> {
        let key = (screen_id.to_owned(), normalize_query(query));
        match self.replies.get(&key)? {
            Replies::Fixed(s) => Some(s.clone()),
            Replies::Sequence(seq) => {
                let mut cursors = self.cursors.lock().unwrap();
                let i = cursors.entry(key).or_insert(0);
                let out = seq.get(*i).cloned();
                *i += 1;
                out
            }
        }
    }
}

impl CompletionBackend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, payload: &TurnPayload) -> Result<CompletionOutcome, GatewayError> {
        let start = Instant::now();
        *self.calls.lock().unwrap() += 1;
        let raw_text = self.lookup(&payload.screen_id, payload.user_query.as_deref()).ok_or_else(|| {
            GatewayError::ScriptExhausted {
                screen_id: payload.screen_id.clone(),
                query: payload.user_query.clone(),
            }
        })?;
        Ok(CompletionOutcome {
            raw_text,
            latency_ms: start.elapsed().as_millis() as u64,
            attempt_count: 1,
            backend: BackendKind::Scripted,
        })
    }
}

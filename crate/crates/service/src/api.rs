//! HTTP API over sessions.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | /health | liveness |
//! | GET | /scenarios | scenario list |
//! | POST | /scenarios/{id}/run | play a command script on a fresh device |
//! | POST | /sessions | `{scenario_id, backend?}` → `{session_id, ...}` |
//! | DELETE | /sessions/{id} | drop a session |
//! | GET | /sessions/{id}/screen | current screen document |
//! | POST | /sessions/{id}/query | `{text: string or null}` → turn outcome |
//! | POST | /sessions/{id}/reset | back to the scenario's initial state |
//! | POST | /sessions/{id}/cancel | abort the pending turn |
//! | GET | /sessions/{id}/transcript | session record |
//! | GET | /sessions/{id}/events | newline-delimited event stream |
//!
//! Errors are `{"error": "..."}` with 400 (malformed body), 404 (unknown
//! session or scenario), 409 (turn in progress) or 502 (backend failure; the
//! body is the turn outcome with its spoken error).

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;

use insight_core::device::{Scenario, ScenarioCatalog};
use insight_core::fixtures::FixtureSource;
use insight_core::gateway::{BackendKind, CompletionBackend, GatewayError};
use insight_core::orchestrator::{CancelToken, ScenarioReport, Session, SessionRecord, TurnEvent, TurnOutcome};
use insight_core::persist;
use insight_core::prompt::PromptEngine;
use insight_core::screen::ScreenContextDocument;

use crate::backends::{backend_for, BackendSettings};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("log directory {0}: {1}")]
    LogDir(PathBuf, String),
    #[error("idle timeout must be at least one minute")]
    IdleTimeout,
}

#[derive(Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub backends: BackendSettings,
    pub fixtures: Arc<dyn FixtureSource>,
    /// Transcripts are appended here, one file per session.
    pub log_dir: Option<PathBuf>,
    pub idle_timeout: Duration,
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(dir) = &self.log_dir {
            let probe = dir.join(".insight-write-probe");
            std::fs::write(&probe, b"").map_err(|e| ConfigError::LogDir(dir.clone(), e.to_string()))?;
            let _ = std::fs::remove_file(probe);
        }
        if self.idle_timeout < Duration::from_secs(60) {
            return Err(ConfigError::IdleTimeout);
        }
        Ok(())
    }
}

pub type BackendFactory =
    Arc<dyn Fn(BackendKind, &Scenario) -> Result<Arc<dyn CompletionBackend>, GatewayError> + Send + Sync>;

/// Events of one session, numbered from zero. Followers wait on `tick`.
struct EventLog {
    lines: Mutex<Vec<String>>,
    tick: watch::Sender<usize>,
}

impl EventLog {
    fn new() -> Self {
        Self { lines: Mutex::new(Vec::new()), tick: watch::channel(0).0 }
    }

    fn push(&self, session_id: &str, event: &TurnEvent) {
        let mut lines = self.lines.lock().unwrap();
        let mut value = serde_json::to_value(event).expect("event serializes");
        let obj = value.as_object_mut().expect("events are objects");
        obj.insert("seq".into(), json!(lines.len()));
        obj.insert("session_id".into(), json!(session_id));
        lines.push(value.to_string() + "\n");
        self.tick.send_replace(lines.len());
    }

    fn since(&self, from: usize) -> Vec<String> {
        let lines = self.lines.lock().unwrap();
        lines.get(from..).map(<[String]>::to_vec).unwrap_or_default()
    }
}

struct Snapshot {
    screen: ScreenContextDocument,
    record: SessionRecord,
}

struct SessionSlot {
    session: Mutex<Session>,
    busy: AtomicBool,
    cancel: CancelToken,
    events: Arc<EventLog>,
    snapshot: Mutex<Snapshot>,
    last_active: Mutex<Instant>,
}

impl SessionSlot {
    fn refresh(&self, session: &Session) {
        *self.snapshot.lock().unwrap() = Snapshot { screen: session.current_screen(), record: session.record().clone() };
        *self.last_active.lock().unwrap() = Instant::now();
    }
}

/// Clears the busy flag however the turn ends.
struct BusyGuard(Arc<SessionSlot>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::SeqCst);
    }
}

pub struct AppState {
    config: ServiceConfig,
    catalog: ScenarioCatalog,
    prompt: Arc<PromptEngine>,
    factory: BackendFactory,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, catalog: ScenarioCatalog, prompt: Arc<PromptEngine>) -> Arc<Self> {
        let source = config.fixtures.clone();
        let settings = config.backends.clone();
        let factory: BackendFactory = Arc::new(move |kind, scenario| backend_for(kind, scenario, source.as_ref(), &settings));
        Self::with_factory(config, catalog, prompt, factory)
    }

    /// Like `new` with a caller-supplied way to build backends.
    pub fn with_factory(
        config: ServiceConfig,
        catalog: ScenarioCatalog,
        prompt: Arc<PromptEngine>,
        factory: BackendFactory,
    ) -> Arc<Self> {
        Arc::new(Self { config, catalog, prompt, factory, sessions: Mutex::new(HashMap::new()) })
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("no session `{id}`")))
    }

    /// Drops sessions idle for longer than the configured timeout.
    pub fn reap_idle(&self) -> usize {
        let timeout = self.config.idle_timeout;
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| s.busy.load(Ordering::SeqCst) || s.last_active.lock().unwrap().elapsed() < timeout);
        before - sessions.len()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }
}

#[derive(Debug)]
enum ApiError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    BadGateway(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::BadGateway(m) => (StatusCode::BAD_GATEWAY, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::BadRequest(e.body_text()))
}

fn parse_backend(name: Option<&str>, default: BackendKind) -> Result<BackendKind, ApiError> {
    name.map_or(Ok(default), |n| n.parse().map_err(ApiError::BadRequest))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/scenarios", get(list_scenarios))
        .route("/scenarios/{id}/run", post(run_scenario))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/screen", get(screen))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/cancel", post(cancel))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

/// Binds, serves, and reaps idle sessions until ctrl-c.
pub async fn serve(state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(state.config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, fixtures = %state.config.fixtures.describe(), "listening");
    let reaper = state.clone();
    tokio::spawn(async move {
        let every = (reaper.config.idle_timeout / 4).min(Duration::from_secs(30));
        let mut interval = tokio::time::interval(every);
        loop {
            interval.tick().await;
            let n = reaper.reap_idle();
            if n > 0 {
                tracing::info!(dropped = n, "idle sessions removed");
            }
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Serialize)]
struct ScenarioInfo<'a> {
    scenario_id: &'a str,
    title: &'a str,
    commands: &'a [Option<String>],
}

async fn list_scenarios(State(st): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<Value> = st
        .catalog
        .ids()
        .filter_map(|id| st.catalog.get(id).ok())
        .map(|s| json!(ScenarioInfo { scenario_id: &s.id, title: &s.title, commands: &s.commands }))
        .collect();
    Json(json!(list))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    scenario_id: String,
    #[serde(default)]
    backend: Option<String>,
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(payload)?;
    let kind = parse_backend(req.backend.as_deref(), st.config.backends.default_kind)?;
    let scenario = st.catalog.get(&req.scenario_id).map_err(|e| ApiError::NotFound(e.to_string()))?;
    let backend = (st.factory)(kind, &scenario).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let mut session = Session::new(session_id.clone(), scenario, backend, st.prompt.clone());
    let events = Arc::new(EventLog::new());
    let sink_log = events.clone();
    let sink_id = session_id.clone();
    session.set_event_sink(Arc::new(move |e: &TurnEvent| sink_log.push(&sink_id, e)));
    let slot = Arc::new(SessionSlot {
        cancel: session.cancel_token(),
        snapshot: Mutex::new(Snapshot { screen: session.current_screen(), record: session.record().clone() }),
        session: Mutex::new(session),
        busy: AtomicBool::new(false),
        events,
        last_active: Mutex::new(Instant::now()),
    });
    let screen_id = slot.snapshot.lock().unwrap().screen.screen_id.clone();
    st.sessions.lock().unwrap().insert(session_id.clone(), slot);
    tracing::info!(session = %session_id, scenario = %req.scenario_id, backend = %kind, "session created");
    let out = json!({"session_id": session_id, "scenario_id": req.scenario_id, "backend": kind, "screen_id": screen_id});
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

async fn delete_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let slot = st.slot(&id)?;
    if slot.busy.load(Ordering::SeqCst) {
        return Err(ApiError::Conflict("a turn is in progress".into()));
    }
    st.sessions.lock().unwrap().remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

async fn screen(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ScreenContextDocument>, ApiError> {
    Ok(Json(st.slot(&id)?.snapshot.lock().unwrap().screen.clone()))
}

async fn transcript(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionRecord>, ApiError> {
    Ok(Json(st.slot(&id)?.snapshot.lock().unwrap().record.clone()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    #[serde(default)]
    text: Option<String>,
}

fn claim(slot: &Arc<SessionSlot>) -> Result<BusyGuard, ApiError> {
    slot.busy
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .map(|_| BusyGuard(slot.clone()))
        .map_err(|_| ApiError::Conflict("a turn is in progress".into()))
}

async fn query(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<QueryBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(payload)?;
    let slot = st.slot(&id)?;
    let guard = claim(&slot)?;
    let log_dir = st.config.log_dir.clone();
    // The guard moves into the blocking task so the session stays busy until
    // the turn really ends, even if the client goes away.
    let outcome = tokio::task::spawn_blocking(move || {
        let slot = guard.0.clone();
        let mut session = slot.session.lock().unwrap();
        let outcome = session.handle_turn(req.text.as_deref());
        if let (Some(dir), Some(turn)) = (&log_dir, session.record().turns.last()) {
            if let Err(e) = persist::append_turn(session.record(), turn, dir) {
                tracing::error!(session = %session.session_id(), error = %e, "transcript not persisted");
            }
        }
        slot.refresh(&session);
        drop(session);
        drop(guard);
        outcome
    })
    .await
    .map_err(|e| ApiError::BadGateway(format!("turn aborted: {e}")))?;
    Ok(turn_response(outcome))
}

fn turn_response(outcome: TurnOutcome) -> Response {
    let status = match &outcome.error {
        Some(e) if e.kind.is_backend_failure() => StatusCode::BAD_GATEWAY,
        _ => StatusCode::OK,
    };
    (status, Json(outcome)).into_response()
}

async fn reset(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ScreenContextDocument>, ApiError> {
    let slot = st.slot(&id)?;
    let guard = claim(&slot)?;
    let mut session = slot.session.lock().unwrap();
    session.reset();
    slot.refresh(&session);
    let screen = session.current_screen();
    drop(session);
    drop(guard);
    Ok(Json(screen))
}

async fn cancel(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = st.slot(&id)?;
    let pending = slot.busy.load(Ordering::SeqCst);
    if pending {
        slot.cancel.cancel();
    }
    Ok((StatusCode::ACCEPTED, Json(json!({"pending_turn": pending}))).into_response())
}

#[derive(Deserialize)]
struct EventQuery {
    #[serde(default)]
    since: usize,
    #[serde(default = "yes")]
    follow: bool,
}

fn yes() -> bool {
    true
}

async fn events(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventQuery>,
) -> Result<Response, ApiError> {
    let slot = st.slot(&id)?;
    let log = slot.events.clone();
    let rx = log.tick.subscribe();
    let stream = futures::stream::unfold((log, rx, q.since, false), move |(log, mut rx, cursor, done)| async move {
        if done {
            return None;
        }
        loop {
            rx.borrow_and_update();
            let batch = log.since(cursor);
            if !batch.is_empty() {
                let next = cursor + batch.len();
                return Some((Ok::<_, Infallible>(batch.concat()), (log, rx, next, false)));
            }
            if !q.follow {
                return None;
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("static headers"))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunBody {
    #[serde(default)]
    commands: Option<Vec<Option<String>>>,
    #[serde(default)]
    backend: Option<String>,
}

async fn run_scenario(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Option<Json<RunBody>>,
) -> Result<Response, ApiError> {
    let req = payload.map(|Json(b)| b).unwrap_or_default();
    let kind = parse_backend(req.backend.as_deref(), st.config.backends.default_kind)?;
    let scenario = st.catalog.get(&id).map_err(|e| ApiError::NotFound(e.to_string()))?;
    let backend = (st.factory)(kind, &scenario).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let prompt = st.prompt.clone();
    let report: ScenarioReport = tokio::task::spawn_blocking(move || {
        let commands = req.commands.unwrap_or_else(|| scenario.commands.clone());
        let mut session = Session::new(format!("run-{}", scenario.id), scenario, backend, prompt);
        session.play_script(&commands)
    })
    .await
    .map_err(|e| ApiError::BadGateway(format!("run aborted: {e}")))?;
    let status = if report.backend_failed() { StatusCode::BAD_GATEWAY } else { StatusCode::OK };
    Ok((status, Json(report)).into_response())
}

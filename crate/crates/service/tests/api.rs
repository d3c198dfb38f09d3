use std::net::SocketAddr;
use std::path::Path;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use insight_core::device::Scenario;
use insight_core::fixtures::EmbeddedSource;
use insight_core::gateway::{BackendKind, CompletionBackend, CompletionOutcome, GatewayError};
use insight_core::prompt::TurnPayload;
use insight_core::orchestrator::ScenarioReport;
use insight_core::{PromptEngine, ScenarioCatalog};
use insight_service::api::{router, AppState, BackendFactory, ServiceConfig};
use insight_service::backends::{backend_for, BackendSettings};
use serde_json::{json, Value};

fn config(log_dir: Option<&Path>) -> ServiceConfig {
    ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        backends: BackendSettings::default(),
        fixtures: Arc::new(EmbeddedSource),
        log_dir: log_dir.map(Path::to_path_buf),
        idle_timeout: Duration::from_secs(600),
    }
}

async fn start(state: Arc<AppState>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    format!("http://{addr}")
}

async fn default_server(log_dir: Option<&Path>) -> String {
    start(AppState::new(config(log_dir), ScenarioCatalog::builtin(), Arc::new(PromptEngine::default()))).await
}

async fn server_with(factory: BackendFactory) -> String {
    start(AppState::with_factory(config(None), ScenarioCatalog::builtin(), Arc::new(PromptEngine::default()), factory))
        .await
}

async fn create(client: &reqwest::Client, base: &str, scenario: &str) -> String {
    let resp = client.post(format!("{base}/sessions")).json(&json!({"scenario_id": scenario})).send().await.unwrap();
    assert_eq!(resp.status(), 201);
    resp.json::<Value>().await.unwrap()["session_id"].as_str().unwrap().to_owned()
}

async fn query(client: &reqwest::Client, base: &str, id: &str, text: Value) -> reqwest::Response {
    client.post(format!("{base}/sessions/{id}/query")).json(&json!({ "text": text })).send().await.unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn null_query_gets_a_summary() {
    let base = default_server(None).await;
    let client = reqwest::Client::new();
    let id = create(&client, &base, "shopping-summary").await;
    let resp = query(&client, &base, &id, Value::Null).await;
    assert_eq!(resp.status(), 200);
    let out: Value = resp.json().await.unwrap();
    assert_eq!(out["responseType"], "Summarize");
    assert!(out["spoken"][0].as_str().unwrap().starts_with("The screen displays the Amazon.com homepage"));

    let screen: Value = client.get(format!("{base}/sessions/{id}/screen")).send().await.unwrap().json().await.unwrap();
    assert_eq!(screen["screen_id"], "amazon-home");
    let transcript: Value =
        client.get(format!("{base}/sessions/{id}/transcript")).send().await.unwrap().json().await.unwrap();
    assert_eq!(transcript["turns"].as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn action_turn_streams_events_in_order() {
    let base = default_server(None).await;
    let client = reqwest::Client::new();
    let id = create(&client, &base, "settings-network").await;
    let resp = query(&client, &base, &id, json!("Go to Network and Internet settings")).await;
    assert_eq!(resp.status(), 200);

    let text = client.get(format!("{base}/sessions/{id}/events?follow=false")).send().await.unwrap().text().await.unwrap();
    let events: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: Vec<&str> = events.iter().map(|e| e["event"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["turn-started", "action-executed", "screen-changed", "spoken-text", "spoken-text", "turn-finished"]);
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e["seq"], i);
        assert_eq!(e["session_id"], id.as_str());
    }
    assert_eq!(events[2]["screen_id"], "network-internet");

    let later = client.get(format!("{base}/sessions/{id}/events?follow=false&since=4")).send().await.unwrap().text().await.unwrap();
    assert_eq!(later.lines().count(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn reset_restores_initial_screen() {
    let base = default_server(None).await;
    let client = reqwest::Client::new();
    let id = create(&client, &base, "settings-network").await;
    query(&client, &base, &id, json!("Go to Network and Internet settings")).await;
    let screen: Value = client.post(format!("{base}/sessions/{id}/reset")).send().await.unwrap().json().await.unwrap();
    assert_eq!(screen["screen_id"], "settings-main");
}

#[tokio::test(flavor = "multi_thread")]
async fn error_statuses() {
    let base = default_server(None).await;
    let client = reqwest::Client::new();
    let missing = client.get(format!("{base}/sessions/nope/screen")).send().await.unwrap();
    assert_eq!(missing.status(), 404);
    let unknown = client.post(format!("{base}/sessions")).json(&json!({"scenario_id": "nope"})).send().await.unwrap();
    assert_eq!(unknown.status(), 404);
    let id = create(&client, &base, "settings-network").await;
    let bad = client
        .post(format!("{base}/sessions/{id}/query"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(bad.status(), 400);
    assert!(bad.json::<Value>().await.unwrap()["error"].is_string());
    let wrong_field = query(&client, &base, &id, json!(5)).await;
    assert_eq!(wrong_field.status(), 400);
    let backend = client
        .post(format!("{base}/sessions"))
        .json(&json!({"scenario_id": "settings-network", "backend": "carrier-pigeon"}))
        .send()
        .await
        .unwrap();
    assert_eq!(backend.status(), 400);
    let gone = client.delete(format!("{base}/sessions/{id}")).send().await.unwrap();
    assert_eq!(gone.status(), 204);
    assert_eq!(query(&client, &base, &id, Value::Null).await.status(), 404);
}

struct Failing;

impl CompletionBackend for Failing {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn complete(&self, _: &TurnPayload) -> Result<CompletionOutcome, GatewayError> {
        Err(GatewayError::Transport { attempts: 3, message: "connection refused".into() })
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn backend_failure_is_bad_gateway() {
    let factory: BackendFactory = Arc::new(|_, _| Ok(Arc::new(Failing) as Arc<dyn CompletionBackend>));
    let base = server_with(factory).await;
    let client = reqwest::Client::new();
    let id = create(&client, &base, "settings-network").await;
    let resp = query(&client, &base, &id, Value::Null).await;
    assert_eq!(resp.status(), 502);
    let out: Value = resp.json().await.unwrap();
    assert!(!out["spoken"][0].as_str().unwrap().is_empty());
    assert_eq!(out["error"]["kind"], "transport");

    let run = client.post(format!("{base}/scenarios/settings-network/run")).send().await.unwrap();
    assert_eq!(run.status(), 502);
}

/// Holds every completion until the test releases it.
struct Gate {
    entered: Mutex<mpsc::Sender<()>>,
    release: Mutex<mpsc::Receiver<()>>,
}

impl CompletionBackend for Gate {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, _: &TurnPayload) -> Result<CompletionOutcome, GatewayError> {
        let _ = self.entered.lock().unwrap().send(());
        self.release.lock().unwrap().recv().unwrap();
        Ok(CompletionOutcome {
            raw_text: r#"{"responseType":"Summarize","text":"Settings.","actions":[]}"#.into(),
            latency_ms: 0,
            attempt_count: 1,
            backend: BackendKind::Scripted,
        })
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn overlapping_turn_is_rejected() {
    let (entered_tx, entered_rx) = mpsc::channel();
    let (release_tx, release_rx) = mpsc::channel();
    let gate = Arc::new(Gate { entered: Mutex::new(entered_tx), release: Mutex::new(release_rx) });
    let factory: BackendFactory = Arc::new(move |_, _| Ok(gate.clone() as Arc<dyn CompletionBackend>));
    let base = server_with(factory).await;
    let client = reqwest::Client::new();
    let id = create(&client, &base, "settings-network").await;

    let first = tokio::spawn({
        let (client, base, id) = (client.clone(), base.clone(), id.clone());
        async move { query(&client, &base, &id, Value::Null).await.status() }
    });
    tokio::task::spawn_blocking(move || entered_rx.recv_timeout(Duration::from_secs(10)).unwrap()).await.unwrap();

    assert_eq!(query(&client, &base, &id, Value::Null).await.status(), 409);
    // Reads are served from the snapshot while the turn runs.
    assert_eq!(client.get(format!("{base}/sessions/{id}/screen")).send().await.unwrap().status(), 200);

    release_tx.send(()).unwrap();
    assert_eq!(first.await.unwrap(), 200);
    release_tx.send(()).unwrap();
    assert_eq!(query(&client, &base, &id, Value::Null).await.status(), 200);
}

#[tokio::test(flavor = "multi_thread")]
async fn run_endpoint_matches_library_run() {
    let base = default_server(None).await;
    let client = reqwest::Client::new();
    let resp = client.post(format!("{base}/scenarios/task1-settings/run")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let api: ScenarioReport = resp.json().await.unwrap();
    assert!(api.success);

    let catalog = ScenarioCatalog::builtin();
    let scenario: Arc<Scenario> = catalog.get("task1-settings").unwrap();
    let backend = backend_for(BackendKind::Scripted, &scenario, &EmbeddedSource, &BackendSettings::default()).unwrap();
    let lib = insight_core::run_scenario(&catalog, "task1-settings", None, backend, Arc::new(PromptEngine::default())).unwrap();
    assert_eq!(api.without_timing(), lib.without_timing());

    let listed: Value = client.get(format!("{base}/scenarios")).send().await.unwrap().json().await.unwrap();
    assert!(listed.as_array().unwrap().iter().any(|s| s["scenario_id"] == "task2-shopping"));
}

#[tokio::test(flavor = "multi_thread")]
async fn turns_are_persisted_to_log_dir() {
    let dir = tempfile::tempdir().unwrap();
    let base = default_server(Some(dir.path())).await;
    let client = reqwest::Client::new();
    let id = create(&client, &base, "task1-settings").await;
    query(&client, &base, &id, json!("open settings")).await;
    query(&client, &base, &id, json!("open sound settings")).await;

    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    assert!(files[0].file_name().unwrap().to_str().unwrap().starts_with(&id));
    let record = insight_core::persist::load_session(&files[0]).unwrap();
    assert_eq!(record.turns.len(), 2);
    assert_eq!(record.turns[1].screen_after, "sound");
}

use std::process::{Command, Output};

use insight_core::orchestrator::ScenarioReport;
use serde_json::Value;

fn insight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_insight")).args(args).env_remove("INSIGHT_API_KEY").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_scenario_reaches_goal() {
    let out = insight(&["run-scenario", "task1-settings"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("success=true"));
}

#[test]
fn missed_goal_exits_one() {
    let out = insight(&["run-scenario", "task1-settings", "-c", "open settings"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_scenario_exits_three() {
    assert_eq!(insight(&["run-scenario", "nope"]).status.code(), Some(3));
}

#[test]
fn usage_error_exits_two() {
    assert_eq!(insight(&["run-scenario"]).status.code(), Some(2));
}

#[test]
fn cli_and_http_reports_agree() {
    let out = insight(&["run-scenario", "task2-shopping", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let cli: ScenarioReport = serde_json::from_slice(&out.stdout).unwrap();

    let rt = tokio::runtime::Runtime::new().unwrap();
    let api: ScenarioReport = rt.block_on(async {
        use std::sync::Arc;
        use insight_service::api::{router, AppState, ServiceConfig};
        let config = ServiceConfig {
            listen: "127.0.0.1:0".parse().unwrap(),
            backends: Default::default(),
            fixtures: Arc::new(insight_core::fixtures::EmbeddedSource),
            log_dir: None,
            idle_timeout: std::time::Duration::from_secs(600),
        };
        let state = AppState::new(config, insight_core::ScenarioCatalog::builtin(), Arc::new(Default::default()));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
        reqwest::Client::new()
            .post(format!("http://{addr}/scenarios/task2-shopping/run"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap()
    });
    assert_eq!(cli.without_timing(), api.without_timing());
}

#[test]
fn validate_fixtures_is_clean() {
    let out = insight(&["validate-fixtures", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["issues"].as_array().unwrap().len(), 0);
}

#[test]
fn broken_fixture_dir_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("screens")).unwrap();
    std::fs::write(tmp.path().join("screens/x.json"), "{}").unwrap();
    let out = insight(&["validate-fixtures", "--scenario-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_shows_fewer_queries_than_focus_moves() {
    let out = insight(&["compare", "task2-shopping", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let queries = v["conversational_queries"].as_u64().unwrap();
    let moves = v["baseline_focus_moves"].as_u64().unwrap();
    assert!(queries <= 3 && moves >= 15 && queries < moves, "{queries} vs {moves}");
}

#[test]
fn replay_runs_from_recordings() {
    let out = insight(&["replay", "task1-settings", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: ScenarioReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.turns[1].screen_after, "sound");

    // Scenarios without a goal never count as reached.
    assert_eq!(insight(&["replay", "settings-network"]).status.code(), Some(1));
}

#[test]
fn remote_without_credential_is_a_backend_failure() {
    let out = insight(&["--backend", "remote", "run-scenario", "shopping-summary"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_transcript_to_log_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = insight(&["--log-dir", tmp.path().to_str().unwrap(), "run-scenario", "task1-settings"]);
    assert_eq!(out.status.code(), Some(0));
    let files: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let record = insight_core::persist::load_session(&files[0]).unwrap();
    assert_eq!(record.turns.len(), 3);
}

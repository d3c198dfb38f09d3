mod common;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use common::*;
use insight_core::gateway::{RecordStore, RecordingBackend, ReplayBackend, ScriptedBackend};
use insight_core::prompt::HistoryEntry;
use insight_core::protocol::{ActionType, ResponseType};
use insight_core::screen::minimum_budget;
use insight_core::{run_scenario, CompletionBackend, PromptConfig, PromptEngine, ScenarioCatalog, Session};
use proptest::prelude::*;

fn arb_history() -> impl Strategy<Value = Vec<HistoryEntry>> {
    prop::collection::vec(
        (prop::option::of("[a-z ]{0,20}"), prop::sample::select(ResponseType::ALL.to_vec()), "[a-zA-Z .]{0,60}")
            .prop_map(|(user_query, response_type, text)| HistoryEntry { user_query, response_type, text }),
        0..10,
    )
}

fn engine_with_budget(budget: usize) -> PromptEngine {
    let mut config = PromptConfig::default();
    config.screen_char_budget = budget;
    config.payload_char_ceiling = config.payload_char_ceiling.max(budget + 1);
    PromptEngine::new(config).unwrap()
}

proptest! {
    #[test]
    fn payloads_are_deterministic(
        id in prop::sample::select(SCREEN_IDS.to_vec()),
        query in prop::option::of("[a-z ]{0,30}"),
        history in arb_history(),
    ) {
        let screen = fixture_screen(id);
        let a = PromptEngine::default().build_turn(&screen, query.as_deref(), &history);
        let b = PromptEngine::default().build_turn(&screen, query.as_deref(), &history);
        prop_assert_eq!(a.content_hash(), b.content_hash());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn screen_context_respects_budget(id in prop::sample::select(SCREEN_IDS.to_vec()), budget in 200usize..6000) {
        let screen = fixture_screen(id);
        let payload = engine_with_budget(budget).build_turn(&screen, None, &[]);
        prop_assert!(payload.screen_context.chars().count() <= budget.max(minimum_budget(&screen)));
        let pruned = insight_core::screen::parse_screen(&payload.screen_context).unwrap();
        prop_assert_eq!(pruned.screen_id, screen.screen_id);
    }

    #[test]
    fn history_is_bounded(history in arb_history()) {
        let engine = PromptEngine::default();
        let payload = engine.build_turn(&fixture_screen("launcher"), Some("hi"), &history);
        prop_assert!(payload.history.len() <= engine.config().history_bound);
        prop_assert!(history.ends_with(&payload.history));
    }
}

/// Upper-case tokens in the prompt that name an action type.
fn action_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_ascii_uppercase() || c == '_'))
        .filter(|t| t.starts_with("ACTION_") || *t == "NAVIGATE" || *t == "OPEN_APP")
        .map(str::to_owned)
        .collect()
}

#[test]
fn prompt_names_exactly_the_accepted_actions() {
    let prompt = PromptEngine::default().system_prompt().to_owned();
    let expected: BTreeSet<String> = ActionType::ALL.iter().map(|t| t.wire_name().to_owned()).collect();
    assert_eq!(action_tokens(&prompt), expected);
    for rt in ResponseType::ALL {
        assert!(prompt.contains(rt.as_str()), "{rt}");
    }
}

#[test]
fn corpus_payloads_have_distinct_hashes() {
    let engine = PromptEngine::default();
    let mut seen: HashMap<String, String> = HashMap::new();
    let queries = [None, Some("open settings"), Some("Open settings"), Some("go to my cart"), Some("what is in my cart?")];
    let histories = [
        vec![],
        vec![HistoryEntry { user_query: None, response_type: ResponseType::Summarize, text: "Home.".into() }],
    ];
    for id in SCREEN_IDS {
        let screen = fixture_screen(id);
        for q in queries {
            for h in &histories {
                let p = engine.build_turn(&screen, q, h);
                let msg = p.user_message();
                if let Some(prev) = seen.insert(p.content_hash(), msg.clone()) {
                    assert_eq!(prev, msg, "hash collision");
                }
            }
        }
    }
    assert_eq!(seen.len(), SCREEN_IDS.len() * queries.len() * histories.len());
}

#[test]
fn replay_reproduces_recorded_text() {
    let recorded = fixture_text("recordings/task1-settings.jsonl");
    let tmp = tempfile::tempdir().unwrap();
    let store = RecordStore::new(tmp.path().join("again.jsonl"));
    let replay: Arc<dyn CompletionBackend> = Arc::new(ReplayBackend::from_jsonl(&recorded).unwrap());
    let backend = Arc::new(RecordingBackend::new(replay, RecordStore::new(store.path())));
    let report = run_scenario(&ScenarioCatalog::builtin(), "task1-settings", None, backend, Arc::new(PromptEngine::default()))
        .unwrap();
    assert!(report.success);
    let original = RecordStore::new(fixture_dir().join("recordings/task1-settings.jsonl")).load().unwrap();
    let again = store.load().unwrap();
    assert_eq!(again.len(), original.len());
    for (a, b) in again.iter().zip(&original) {
        assert_eq!(a.payload_hash, b.payload_hash);
        assert_eq!(a.raw_text.as_bytes(), b.raw_text.as_bytes());
    }
}

#[test]
fn identical_replies_give_identical_state_across_backends() {
    let catalog = ScenarioCatalog::builtin();
    let prompt = Arc::new(PromptEngine::default());
    for id in ["task1-settings", "shopping-summary", "settings-network"] {
        let scenario = catalog.get(id).unwrap();
        let scripted: Arc<dyn CompletionBackend> =
            Arc::new(ScriptedBackend::from_json(&fixture_text("scripts/phone.json")).unwrap());
        let replay: Arc<dyn CompletionBackend> =
            Arc::new(ReplayBackend::from_jsonl(&fixture_text(&format!("recordings/{id}.jsonl"))).unwrap());
        let mut a = Session::new("a", scenario.clone(), scripted, prompt.clone());
        let mut b = Session::new("b", scenario.clone(), replay, prompt.clone());
        let ra = a.play_script(&scenario.commands).without_timing();
        let rb = b.play_script(&scenario.commands).without_timing();
        assert_eq!(a.device(), b.device(), "{id}");
        assert_eq!(ra.turns, rb.turns, "{id}");
    }
}

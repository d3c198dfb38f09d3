mod common;

use std::collections::BTreeSet;

use common::*;
use insight_core::device::AppRegistry;
use insight_core::grounding::{ground, parse_response, DiagnosticClass, ResponseError};
use insight_core::protocol::{ActionType, AgentResponse, ResponseType, UiAction};
use insight_core::ScenarioCatalog;
use proptest::prelude::*;
use serde_json::{json, Value};

fn apps() -> AppRegistry {
    ScenarioCatalog::builtin().get("free-play").unwrap().apps.clone()
}

type Expected = Vec<(usize, DiagnosticClass)>;

/// Valid actions with fabricated ones spliced in at random positions.
fn plan_case(id: &'static str) -> impl Strategy<Value = (Vec<UiAction>, Expected)> {
    let raw = raw_screen(id);
    let good = good_actions(&raw);
    (
        prop::collection::vec(prop::sample::select(good), 0..4),
        prop::collection::vec((arb_bad_action(raw), any::<prop::sample::Index>()), 0..3),
    )
        .prop_map(|(good, bad)| {
            let mut tagged: Vec<(UiAction, Option<DiagnosticClass>)> = good.into_iter().map(|a| (a, None)).collect();
            for ((action, class), at) in bad {
                let i = at.index(tagged.len() + 1);
                tagged.insert(i, (action, Some(class)));
            }
            let expected = tagged.iter().enumerate().filter_map(|(i, (_, c))| c.map(|c| (i, c))).collect();
            (tagged.into_iter().map(|(a, _)| a).collect(), expected)
        })
}

fn arb_fixture() -> impl Strategy<Value = &'static str> {
    prop::sample::select(SCREEN_IDS.to_vec())
}

proptest! {
    #[test]
    fn plans_are_all_or_nothing(
        (id, (actions, expected)) in arb_fixture().prop_flat_map(|id| (Just(id), plan_case(id)))
    ) {
        let screen = fixture_screen(id);
        let response = AgentResponse::action("ok", actions.clone());
        match ground(&response, &screen, &apps()) {
            Ok(plan) => {
                prop_assert!(expected.is_empty());
                prop_assert_eq!(plan.actions(), &actions[..]);
            }
            Err(e) => {
                let got: Vec<_> = e.diagnostics.iter().map(|d| (d.index, d.class)).collect();
                prop_assert_eq!(got, expected);
            }
        }
    }

    #[test]
    fn grounded_targets_carry_the_capability(id in arb_fixture(), pick in any::<prop::sample::Index>()) {
        let screen = fixture_screen(id);
        let good = good_actions(&raw_screen(id));
        let action = good[pick.index(good.len())].clone();
        let plan = ground(&AgentResponse::action("ok", vec![action.clone()]), &screen, &apps()).unwrap();
        if let Some(b) = action.target() {
            let r = &plan.resolved[0];
            prop_assert_eq!(r.node.bounds, *b);
            let node = insight_core::screen::find_by_key(&screen, &r.node).unwrap();
            prop_assert!(node.has(action.action_type().required_capability().unwrap()));
        }
    }

    #[test]
    fn parsing_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_response(&String::from_utf8_lossy(&bytes));
    }

    #[test]
    fn parsing_json_shaped_text_never_panics(
        rt in prop_oneof![Just("Action"), Just("Summarize"), Just("Answer"), Just("Error"), Just("action")],
        text in ".{0,20}",
        actions in prop::collection::vec(any::<u8>(), 0..40),
    ) {
        let raw = format!(r#"{{"responseType":"{rt}","text":{},"actions":[{}]}}"#,
            serde_json::to_string(&text).unwrap(), String::from_utf8_lossy(&actions));
        let _ = parse_response(&raw);
    }

    #[test]
    fn action_fields_must_match_exactly(
        t in prop::sample::select(ActionType::ALL.to_vec()),
        fields in prop::collection::btree_set(prop::sample::select(vec!["bounds", "text", "navigationType", "app_name"]), 0..5),
    ) {
        let value_for = |f: &str| match f {
            "bounds" => json!({"left": 0, "top": 500, "right": 1080, "bottom": 690}),
            "text" => json!("hi"),
            "navigationType" => json!("back"),
            _ => json!("Settings"),
        };
        let mut obj = serde_json::Map::new();
        obj.insert("type".into(), json!(t.wire_name()));
        for f in &fields {
            obj.insert((*f).into(), value_for(f));
        }
        let required: BTreeSet<&str> = t.required_fields().iter().copied().collect();
        let raw = json!({"responseType": "Action", "text": "", "actions": [Value::Object(obj)]}).to_string();
        let parsed = parse_response(&raw);
        prop_assert_eq!(parsed.is_ok(), fields == required, "{:?}", parsed);
        if fields != required {
            prop_assert!(matches!(parsed, Err(ResponseError::Schema(_))));
        }
    }

    #[test]
    fn protocol_rules(rt in prop::sample::select(ResponseType::ALL.to_vec()), text in "[ a-z]{0,5}", n in 0usize..3) {
        let actions: Vec<Value> = (0..n).map(|_| json!({"type": "NAVIGATE", "navigationType": "back"})).collect();
        let raw = json!({"responseType": rt.as_str(), "text": text, "actions": actions}).to_string();
        let ok = match rt {
            ResponseType::Action => n > 0,
            _ => n == 0 && !text.trim().is_empty(),
        };
        prop_assert_eq!(parse_response(&raw).is_ok(), ok);
    }
}

fn schema() -> Value {
    serde_json::from_str(&fixture_text("schema/agent-response.schema.json")).unwrap()
}

#[test]
fn schema_file_lists_exactly_the_accepted_actions() {
    let s = schema();
    let defs = &s["$defs"];
    let mut from_schema: BTreeSet<(String, BTreeSet<String>)> = BTreeSet::new();
    for branch in s["$defs"]["action"]["oneOf"].as_array().unwrap() {
        let name = branch["$ref"].as_str().unwrap().rsplit('/').next().unwrap();
        let def = &defs[name];
        let required: BTreeSet<String> =
            def["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_owned()).filter(|f| f != "type").collect();
        let types: Vec<String> = match &def["properties"]["type"] {
            t if t.get("const").is_some() => vec![t["const"].as_str().unwrap().to_owned()],
            t => t["enum"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_owned()).collect(),
        };
        for t in types {
            from_schema.insert((t, required.clone()));
        }
    }
    let from_code: BTreeSet<(String, BTreeSet<String>)> = insight_core::grounding::accepted_action_types()
        .iter()
        .map(|t| (t.wire_name().to_owned(), t.required_fields().iter().map(|f| (*f).to_owned()).collect()))
        .collect();
    assert_eq!(from_schema, from_code);

    let rts: BTreeSet<&str> = s["properties"]["responseType"]["enum"].as_array().unwrap().iter().filter_map(Value::as_str).collect();
    assert_eq!(rts, ResponseType::ALL.iter().map(|r| r.as_str()).collect());
}

#[test]
fn code_fenced_reply_parses() {
    let raw = "```json\n{\"responseType\":\"Answer\",\"text\":\"Yes.\",\"actions\":[]}\n```";
    assert_eq!(parse_response(raw).unwrap().text, "Yes.");
}

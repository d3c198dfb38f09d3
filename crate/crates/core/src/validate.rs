//! Whole-corpus fixture checks.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::device::{DeviceState, Scenario};
use crate::fixtures::FixtureSource;
use crate::gateway::{ReplayBackend, ScriptFile, ScriptedBackend};
use crate::grounding::{ground, parse_response};
use crate::prompt::PromptConfig;
use crate::screen::parse_screen;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FixtureIssue {
    pub file: String,
    pub message: String,
}

impl fmt::Display for FixtureIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file, self.message)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FixtureReport {
    pub files_checked: usize,
    pub issues: Vec<FixtureIssue>,
}

impl FixtureReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    fn issue(&mut self, file: impl Into<String>, message: impl fmt::Display) {
        self.issues.push(FixtureIssue { file: file.into(), message: message.to_string() });
    }
}

/// Checks screens against the document invariants, loads every scenario,
/// and makes sure every structured scripted reply parses and grounds on the
/// screen it is keyed to.
pub fn validate_fixtures(source: &dyn FixtureSource) -> FixtureReport {
    let mut report = FixtureReport::default();

    for id in source.list("screens", "json").unwrap_or_default() {
        let file = format!("screens/{id}.json");
        report.files_checked += 1;
        match source.read(&file).map_err(|e| e.to_string()).and_then(|t| parse_screen(&t).map_err(|e| e.to_string())) {
            Ok(doc) if doc.screen_id != id => report.issue(&file, format!("declares screen_id `{}`", doc.screen_id)),
            Ok(doc) => {
                for v in doc.violations() {
                    report.issue(&file, v);
                }
            }
            Err(e) => report.issue(&file, e),
        }
    }

    let mut scenarios: Vec<Scenario> = Vec::new();
    for id in source.list("scenarios", "json").unwrap_or_default() {
        report.files_checked += 1;
        match Scenario::load(source, &id) {
            Ok(s) => scenarios.push(s),
            Err(e) => report.issue(format!("scenarios/{id}.json"), e),
        }
    }

    let mut scripts_used = BTreeSet::new();
    for s in &scenarios {
        for id in s.screen_ids() {
            let doc = s.current_screen(&DeviceState {
                current_app: String::new(),
                screen_stack: vec![id.to_owned()],
                app_data: s.initial_data().clone(),
            });
            for v in doc.violations() {
                report.issue(format!("scenarios/{}.json", s.id), format!("screen `{id}` as rendered: {v}"));
            }
        }
        if let Some(script) = &s.script {
            scripts_used.insert(script.clone());
        }
    }

    for name in source.list("scripts", "json").unwrap_or_default() {
        let file = format!("scripts/{name}.json");
        report.files_checked += 1;
        let text = match source.read(&file) {
            Ok(t) => t,
            Err(e) => {
                report.issue(&file, e);
                continue;
            }
        };
        if let Err(e) = ScriptedBackend::from_json(&text) {
            report.issue(&file, e);
            continue;
        }
        let script: ScriptFile = serde_json::from_str(&text).expect("parsed above");
        let users: Vec<&Scenario> = scenarios.iter().filter(|s| s.script.as_deref() == Some(name.as_str())).collect();
        for entry in &script.entries {
            let replies = entry.reply.iter().chain(entry.replies.iter().flatten());
            for reply in replies.filter(|v| v.is_object()) {
                let raw = reply.to_string();
                let response = match parse_response(&raw) {
                    Ok(r) => r,
                    Err(e) => {
                        report.issue(&file, format!("reply for ({}, {:?}): {e}", entry.screen_id, entry.query));
                        continue;
                    }
                };
                for s in &users {
                    let Some(screen) = s.base_screen(&entry.screen_id) else {
                        report.issue(&file, format!("unknown screen `{}` for scenario {}", entry.screen_id, s.id));
                        continue;
                    };
                    if let Err(e) = ground(&response, screen, &s.apps) {
                        report.issue(&file, format!("reply for ({}, {:?}) does not ground: {e}", entry.screen_id, entry.query));
                    }
                }
            }
        }
    }
    for missing in scripts_used.iter().filter(|n| source.read(&format!("scripts/{n}.json")).is_err()) {
        report.issue(format!("scripts/{missing}.json"), "referenced by a scenario but missing");
    }

    for name in source.list("recordings", "jsonl").unwrap_or_default() {
        let file = format!("recordings/{name}.jsonl");
        report.files_checked += 1;
        if let Err(e) = source.read(&file).map_err(|e| e.to_string()).and_then(|t| ReplayBackend::from_jsonl(&t).map(|_| ()).map_err(|e| e.to_string())) {
            report.issue(&file, e);
        }
    }

    report.files_checked += 1;
    match source.read("prompt/default.toml") {
        Ok(text) => {
            if let Err(e) = PromptConfig::from_toml(&text) {
                report.issue("prompt/default.toml", e);
            }
        }
        Err(e) => report.issue("prompt/default.toml", e),
    }

    report
}

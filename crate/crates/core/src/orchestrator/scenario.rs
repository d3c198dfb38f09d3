use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Session, TurnErrorKind, TurnOutcome};
use crate::device::{DeviceError, ScenarioCatalog};
use crate::gateway::{BackendKind, CompletionBackend};
use crate::prompt::PromptEngine;
use crate::protocol::ResponseType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnSummary {
    /// 1-based.
    pub turn: usize,
    pub query: Option<String>,
    #[serde(rename = "responseType")]
    pub response_type: ResponseType,
    pub spoken: Vec<String>,
    pub actions_executed: usize,
    pub screen_after: String,
    pub goal_reached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnErrorKind>,
    pub latency_ms: u64,
}

/// Outcome of replaying a command script against a fresh device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub backend: BackendKind,
    /// Goal state after the last command.
    pub success: bool,
    /// First turn (1-based) after which the goal held.
    pub goal_reached_at: Option<usize>,
    pub turns_used: usize,
    pub total_actions: usize,
    pub backend_calls: u32,
    pub wall_time_ms: u64,
    pub turns: Vec<TurnSummary>,
}

impl ScenarioReport {
    /// The report with every timing field zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.wall_time_ms = 0;
        for t in &mut r.turns {
            t.latency_ms = 0;
        }
        r
    }

    /// True when some turn failed because the model backend did.
    pub fn backend_failed(&self) -> bool {
        self.turns.iter().any(|t| t.error.is_some_and(TurnErrorKind::is_backend_failure))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario {} ({} backend)", self.scenario_id, self.backend);
        let _ = writeln!(out, "{:<5} {:<32} {:<10} {:>7} {:<18} {:>5}", "turn", "query", "reply", "actions", "screen", "goal");
        for t in &self.turns {
            let query = t.query.as_deref().unwrap_or("(summarize)");
            let query: String = if query.chars().count() > 32 {
                query.chars().take(29).chain("...".chars()).collect()
            } else {
                query.to_owned()
            };
            let _ = writeln!(
                out,
                "{:<5} {:<32} {:<10} {:>7} {:<18} {:>5}",
                t.turn,
                query,
                t.response_type.as_str(),
                t.actions_executed,
                t.screen_after,
                if t.goal_reached { "yes" } else { "no" }
            );
        }
        let _ = writeln!(
            out,
            "success={} goal_reached_at={} turns={} actions={} backend_calls={} wall_time_ms={}",
            self.success,
            self.goal_reached_at.map_or("-".to_owned(), |t| t.to_string()),
            self.turns_used,
            self.total_actions,
            self.backend_calls,
            self.wall_time_ms
        );
        out
    }
}

/// Resets the scenario's device and plays `commands` (or the scenario's own
/// script) through one session. Every command runs; the goal is checked
/// after each turn.
pub fn run_scenario(
    catalog: &ScenarioCatalog,
    scenario_id: &str,
    commands: Option<&[Option<String>]>,
    backend: Arc<dyn CompletionBackend>,
    prompt: Arc<PromptEngine>,
) -> Result<ScenarioReport, DeviceError> {
    let scenario = catalog.get(scenario_id)?;
    let commands = commands.map(<[_]>::to_vec).unwrap_or_else(|| scenario.commands.clone());
    let mut session = Session::new(format!("run-{scenario_id}"), scenario, backend.clone(), prompt);
    Ok(play(&mut session, &commands, |s, q| s.handle_turn(q)))
}

/// Shared by `run_scenario` and callers that drive turns another way (the
/// HTTP service), so both produce the same report.
pub(crate) fn play(
    session: &mut Session,
    commands: &[Option<String>],
    mut turn: impl FnMut(&mut Session, Option<&str>) -> TurnOutcome,
) -> ScenarioReport {
    let started = Instant::now();
    let mut report = ScenarioReport {
        scenario_id: session.scenario().id.clone(),
        backend: session.record().backend,
        success: false,
        goal_reached_at: None,
        turns_used: 0,
        total_actions: 0,
        backend_calls: 0,
        wall_time_ms: 0,
        turns: Vec::new(),
    };
    for command in commands {
        let outcome = turn(session, command.as_deref());
        let record = session.record().turns.last().expect("turn recorded");
        let reached = session.goal_reached();
        report.turns_used += 1;
        report.total_actions += outcome.execution.succeeded();
        report.backend_calls += record.backend_calls;
        if reached && report.goal_reached_at.is_none() {
            report.goal_reached_at = Some(report.turns_used);
        }
        report.turns.push(TurnSummary {
            turn: report.turns_used,
            query: record.query.clone(),
            response_type: outcome.response_type,
            spoken: outcome.spoken.clone(),
            actions_executed: outcome.execution.succeeded(),
            screen_after: outcome.screen_id.clone(),
            goal_reached: reached,
            error: outcome.error.as_ref().map(|e| e.kind),
            latency_ms: record.latency_ms,
        });
    }
    report.success = session.goal_reached();
    report.wall_time_ms = started.elapsed().as_millis() as u64;
    report
}

impl Session {
    /// Plays a command script on this session as `run_scenario` would.
    pub fn play_script(&mut self, commands: &[Option<String>]) -> ScenarioReport {
        play(self, commands, |s, q| s.handle_turn(q))
    }
}

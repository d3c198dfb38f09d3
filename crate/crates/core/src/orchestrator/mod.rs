//! The turn loop: capture the screen, ask the model, validate its reply,
//! execute grounded actions, and speak the result.

mod baseline;
mod scenario;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::device::{ActionResult, DeviceState, FailureReason, Scenario};
use crate::gateway::{BackendKind, CompletionBackend, GatewayError};
use crate::grounding::{ground, ground_action, DiagnosticClass, GroundedPlan, GroundingError, ResponseError};
use crate::prompt::{HistoryEntry, PromptEngine};
use crate::protocol::{AgentResponse, ResponseType, UiAction};
use crate::screen::ScreenContextDocument;

pub use baseline::{run_baseline_traversal, BaselineError, BaselineReport, BaselineStep};
pub use scenario::{run_scenario, ScenarioReport, TurnSummary};

pub(crate) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepStatus {
    Succeeded,
    Failed,
    /// The target was no longer on screen when its turn came.
    StalePlan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub action: UiAction,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<FailureReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stale_reason: Option<DiagnosticClass>,
    pub screen_before: String,
    pub screen_after: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ActionFailed,
    StalePlan,
    Cancelled,
}

/// What happened to each action of a plan. Actions after a stop are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub planned: usize,
    pub steps: Vec<StepReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped: Option<StopReason>,
}

impl ExecutionReport {
    pub fn attempted(&self) -> usize {
        self.steps.len()
    }

    pub fn succeeded(&self) -> usize {
        self.steps.iter().filter(|s| s.status == StepStatus::Succeeded).count()
    }

    pub fn completed(&self) -> bool {
        self.stopped.is_none() && self.succeeded() == self.planned
    }

    pub fn is_empty(&self) -> bool {
        self.planned == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnErrorKind {
    Timeout,
    Transport,
    AuthFailure,
    ScriptExhausted,
    StoreUnavailable,
    BackendConfig,
    Parse,
    Schema,
    Protocol,
    Grounding,
    Cancelled,
}

impl TurnErrorKind {
    /// Failures of the model backend itself, as opposed to bad replies.
    pub fn is_backend_failure(self) -> bool {
        matches!(
            self,
            TurnErrorKind::Timeout
                | TurnErrorKind::Transport
                | TurnErrorKind::AuthFailure
                | TurnErrorKind::ScriptExhausted
                | TurnErrorKind::StoreUnavailable
                | TurnErrorKind::BackendConfig
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnError {
    pub kind: TurnErrorKind,
    pub message: String,
}

impl From<&GatewayError> for TurnError {
    fn from(e: &GatewayError) -> Self {
        let kind = match e {
            GatewayError::Timeout { .. } => TurnErrorKind::Timeout,
            GatewayError::Transport { .. } => TurnErrorKind::Transport,
            GatewayError::AuthFailure(_) => TurnErrorKind::AuthFailure,
            GatewayError::ScriptExhausted { .. } => TurnErrorKind::ScriptExhausted,
            GatewayError::StoreUnavailable(_) => TurnErrorKind::StoreUnavailable,
            GatewayError::Config(_) => TurnErrorKind::BackendConfig,
        };
        TurnError { kind, message: e.to_string() }
    }
}

impl From<&ResponseError> for TurnError {
    fn from(e: &ResponseError) -> Self {
        let kind = match e {
            ResponseError::Parse(_) => TurnErrorKind::Parse,
            ResponseError::Schema(_) => TurnErrorKind::Schema,
            ResponseError::Protocol(_) => TurnErrorKind::Protocol,
        };
        TurnError { kind, message: e.to_string() }
    }
}

/// Result of one user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub turn_index: usize,
    #[serde(rename = "responseType")]
    pub response_type: ResponseType,
    /// The reply followed, after an Action, by the summary of the new screen.
    pub spoken: Vec<String>,
    pub execution: ExecutionReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnError>,
    pub screen_id: String,
}

impl TurnOutcome {
    pub fn spoken_text(&self) -> String {
        self.spoken.join(" ")
    }
}

/// One line of a session transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn_index: usize,
    pub timestamp_ms: u64,
    pub query: Option<String>,
    #[serde(rename = "responseType")]
    pub response_type: ResponseType,
    pub spoken: Vec<String>,
    pub actions: Vec<UiAction>,
    pub execution: ExecutionReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnError>,
    pub latency_ms: u64,
    /// Completion calls made, including retries and the follow-up summary.
    pub backend_calls: u32,
    pub screen_before: String,
    pub screen_after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub scenario_id: String,
    pub backend: BackendKind,
    pub started_at_ms: u64,
    pub turns: Vec<TurnRecord>,
}

/// Streamed while a turn runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum TurnEvent {
    TurnStarted {
        turn_index: usize,
        query: Option<String>,
    },
    ActionExecuted {
        turn_index: usize,
        action_index: usize,
        action: UiAction,
        result: ActionResult,
    },
    ScreenChanged {
        turn_index: usize,
        screen_id: String,
        screen: ScreenContextDocument,
    },
    SpokenText {
        turn_index: usize,
        #[serde(rename = "responseType")]
        response_type: ResponseType,
        text: String,
    },
    TurnFinished {
        turn_index: usize,
        #[serde(rename = "responseType")]
        response_type: ResponseType,
        latency_ms: u64,
    },
}

impl TurnEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TurnEvent::TurnStarted { .. } => "turn-started",
            TurnEvent::ActionExecuted { .. } => "action-executed",
            TurnEvent::ScreenChanged { .. } => "screen-changed",
            TurnEvent::SpokenText { .. } => "spoken-text",
            TurnEvent::TurnFinished { .. } => "turn-finished",
        }
    }
}

pub type EventSink = Arc<dyn Fn(&TurnEvent) + Send + Sync>;

/// Shared flag that aborts the pending turn at its next checkpoint.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }

    fn clear(&self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnPolicy {
    /// Extra completions allowed after a malformed or protocol-breaking reply.
    pub reply_retries: u32,
    /// Summarize the new screen after an Action turn.
    pub follow_up_summary: bool,
}

impl Default for TurnPolicy {
    fn default() -> Self {
        Self { reply_retries: 1, follow_up_summary: true }
    }
}

const MSG_BACKEND: &str = "Sorry, I couldn't reach the assistant service. Please try again.";
const MSG_AUTH: &str = "Sorry, the assistant service rejected my credentials.";
const MSG_REPLY: &str = "Sorry, I didn't get a usable answer for that. Please try again.";
const MSG_CANCELLED: &str = "Okay, I stopped.";
const MSG_NO_SUMMARY: &str = "I couldn't describe the new screen.";

fn spoken_error(err: &TurnError) -> String {
    match err.kind {
        TurnErrorKind::AuthFailure => MSG_AUTH.to_owned(),
        TurnErrorKind::Cancelled => MSG_CANCELLED.to_owned(),
        TurnErrorKind::Parse | TurnErrorKind::Schema | TurnErrorKind::Protocol => MSG_REPLY.to_owned(),
        _ => MSG_BACKEND.to_owned(),
    }
}

fn verb(action: &UiAction) -> &'static str {
    match action {
        UiAction::Click { .. } => "clicked",
        UiAction::ScrollForward { .. } | UiAction::ScrollBackward { .. } => "scrolled",
        UiAction::SetText { .. } => "typed into",
        UiAction::SelectText { .. } => "selected",
        UiAction::Navigate { .. } | UiAction::OpenApp { .. } => "used",
    }
}

/// Spoken explanation of a rejected plan, built from its first diagnostic.
fn spoken_grounding_error(err: &GroundingError) -> String {
    let Some(d) = err.diagnostics.first() else {
        return MSG_REPLY.to_owned();
    };
    match (d.class, &d.action) {
        (DiagnosticClass::UnknownApp, UiAction::OpenApp { app_name }) => {
            format!("I couldn't find an app called '{app_name}'.")
        }
        (DiagnosticClass::CapabilityMissing, a) => match &d.label {
            Some(label) => format!("'{label}' can't be {} on this screen.", verb(a)),
            None => format!("That element can't be {} on this screen.", verb(a)),
        },
        _ => "I couldn't find that element on this screen.".to_owned(),
    }
}

fn spoken_step_failure(report: &ExecutionReport) -> Option<String> {
    let last = report.steps.last()?;
    Some(match (report.stopped?, last.failure_reason) {
        (StopReason::Cancelled, _) => MSG_CANCELLED.to_owned(),
        (StopReason::StalePlan, _) => {
            "The screen changed before I could finish, so I stopped there.".to_owned()
        }
        (StopReason::ActionFailed, Some(FailureReason::NoBackHistory)) => "There is nothing to go back to.".to_owned(),
        (StopReason::ActionFailed, Some(FailureReason::NotScrollable)) => "I can't scroll any further.".to_owned(),
        (StopReason::ActionFailed, _) => "That action didn't work, so I stopped there.".to_owned(),
    })
}

/// One user's conversation with one simulated device.
pub struct Session {
    session_id: String,
    scenario: Arc<Scenario>,
    device: DeviceState,
    backend: Arc<dyn CompletionBackend>,
    prompt: Arc<PromptEngine>,
    policy: TurnPolicy,
    record: SessionRecord,
    history: Vec<HistoryEntry>,
    last_spoken: Option<String>,
    cancel: CancelToken,
    sink: Option<EventSink>,
}

impl Session {
    pub fn new(
        session_id: impl Into<String>,
        scenario: Arc<Scenario>,
        backend: Arc<dyn CompletionBackend>,
        prompt: Arc<PromptEngine>,
    ) -> Self {
        let session_id = session_id.into();
        let record = SessionRecord {
            session_id: session_id.clone(),
            scenario_id: scenario.id.clone(),
            backend: backend.kind(),
            started_at_ms: now_ms(),
            turns: Vec::new(),
        };
        Self {
            session_id,
            device: scenario.reset(),
            scenario,
            backend,
            prompt,
            policy: TurnPolicy::default(),
            record,
            history: Vec::new(),
            last_spoken: None,
            cancel: CancelToken::default(),
            sink: None,
        }
    }

    pub fn with_policy(mut self, policy: TurnPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn set_event_sink(&mut self, sink: EventSink) {
        self.sink = Some(sink);
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn device(&self) -> &DeviceState {
        &self.device
    }

    pub fn current_screen(&self) -> ScreenContextDocument {
        self.scenario.current_screen(&self.device)
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    pub fn cancel_token(&self) -> CancelToken {
        self.cancel.clone()
    }

    /// Text of the most recent Answer or Summarize reply.
    pub fn last_spoken(&self) -> Option<&str> {
        self.last_spoken.as_deref()
    }

    pub fn goal_reached(&self) -> bool {
        self.scenario.goal_reached(&self.device, self.last_spoken.as_deref())
    }

    /// Back to the scenario's initial state with an empty conversation.
    /// The transcript is kept; it records what happened, not what is current.
    pub fn reset(&mut self) {
        self.device = self.scenario.reset();
        self.history.clear();
        self.last_spoken = None;
    }

    fn emit(&self, event: TurnEvent) {
        if let Some(sink) = &self.sink {
            sink(&event);
        }
    }

    /// Completes and parses, retrying malformed or protocol-breaking replies.
    fn ask(
        &self,
        screen: &ScreenContextDocument,
        query: Option<&str>,
        calls: &mut u32,
    ) -> Result<AgentResponse, TurnError> {
        let payload = self.prompt.build_turn(screen, query, &self.history);
        let mut attempt = 0;
        loop {
            if self.cancel.is_cancelled() {
                return Err(TurnError { kind: TurnErrorKind::Cancelled, message: "turn cancelled".into() });
            }
            let outcome = self.backend.complete(&payload);
            *calls += outcome.as_ref().map_or_else(GatewayError::attempts, |o| o.attempt_count);
            let outcome = outcome.map_err(|e| TurnError::from(&e))?;
            if self.cancel.is_cancelled() {
                return Err(TurnError { kind: TurnErrorKind::Cancelled, message: "turn cancelled".into() });
            }
            let parsed = crate::grounding::parse_response(&outcome.raw_text).and_then(|r| {
                if query.is_none() && r.response_type != ResponseType::Summarize {
                    Err(ResponseError::Protocol(format!(
                        "a turn without a query must be summarized, got {}",
                        r.response_type
                    )))
                } else {
                    Ok(r)
                }
            });
            match parsed {
                Ok(r) => return Ok(r),
                Err(e) if attempt < self.policy.reply_retries => {
                    tracing::warn!(session = %self.session_id, error = %e, "retrying unusable reply");
                    attempt += 1;
                }
                Err(e) => return Err(TurnError::from(&e)),
            }
        }
    }

    /// Runs one turn. `None` (or a blank query) asks for a summary.
    /// Never fails: every problem becomes an Error-type outcome.
    pub fn handle_turn(&mut self, query: Option<&str>) -> TurnOutcome {
        let started = Instant::now();
        self.cancel.clear();
        let query = query.map(str::trim).filter(|q| !q.is_empty());
        let turn_index = self.record.turns.len();
        self.emit(TurnEvent::TurnStarted { turn_index, query: query.map(str::to_owned) });

        let screen = self.current_screen();
        let screen_before = screen.screen_id.clone();
        let mut calls = 0;
        let mut spoken = Vec::new();
        let mut execution = ExecutionReport::default();
        let mut error = None;
        let mut actions = Vec::new();

        let response_type = match self.ask(&screen, query, &mut calls) {
            Err(e) => {
                spoken.push(spoken_error(&e));
                error = Some(e);
                ResponseType::Error
            }
            Ok(response) => {
                actions = response.actions.clone();
                match ground(&response, &screen, &self.scenario.apps) {
                    Err(g) => {
                        spoken.push(spoken_grounding_error(&g));
                        error = Some(TurnError { kind: TurnErrorKind::Grounding, message: g.to_string() });
                        ResponseType::Error
                    }
                    Ok(plan) => {
                        self.push_history(query, response.response_type, &response.text);
                        if response.response_type == ResponseType::Action {
                            execution = self.execute_plan(&plan, &screen, turn_index);
                            spoken.push(response.text.clone());
                            match spoken_step_failure(&execution) {
                                Some(msg) => spoken.push(msg),
                                None if self.policy.follow_up_summary => {
                                    spoken.push(self.follow_up(&mut calls));
                                }
                                None => {}
                            }
                            if execution.stopped == Some(StopReason::Cancelled) {
                                error = Some(TurnError { kind: TurnErrorKind::Cancelled, message: "turn cancelled".into() });
                            }
                        } else {
                            spoken.push(response.text.clone());
                        }
                        response.response_type
                    }
                }
            }
        };

        for text in &spoken {
            self.emit(TurnEvent::SpokenText { turn_index, response_type, text: text.clone() });
        }
        let latency_ms = started.elapsed().as_millis() as u64;
        let screen_after = self.device.top().to_owned();
        self.record.turns.push(TurnRecord {
            turn_index,
            timestamp_ms: now_ms(),
            query: query.map(str::to_owned),
            response_type,
            spoken: spoken.clone(),
            actions,
            execution: execution.clone(),
            error: error.clone(),
            latency_ms,
            backend_calls: calls,
            screen_before,
            screen_after: screen_after.clone(),
        });
        self.emit(TurnEvent::TurnFinished { turn_index, response_type, latency_ms });
        TurnOutcome { turn_index, response_type, spoken, execution, error, screen_id: screen_after }
    }

    fn push_history(&mut self, query: Option<&str>, response_type: ResponseType, text: &str) {
        self.history.push(HistoryEntry { user_query: query.map(str::to_owned), response_type, text: text.to_owned() });
        if matches!(response_type, ResponseType::Answer | ResponseType::Summarize) {
            self.last_spoken = Some(text.to_owned());
        }
    }

    /// No-query turn describing the screen an Action left us on.
    fn follow_up(&mut self, calls: &mut u32) -> String {
        let screen = self.current_screen();
        match self.ask(&screen, None, calls) {
            Ok(summary) => {
                self.push_history(None, summary.response_type, &summary.text);
                summary.text
            }
            Err(e) => {
                tracing::warn!(session = %self.session_id, error = %e.message, "follow-up summary failed");
                MSG_NO_SUMMARY.to_owned()
            }
        }
    }

    /// Runs a grounded plan in order. Every action after the first is
    /// re-grounded against the live screen; a target that has gone stops the
    /// plan. Device state only ever reflects the successful prefix.
    pub fn execute_plan(
        &mut self,
        plan: &GroundedPlan,
        start_screen: &ScreenContextDocument,
        turn_index: usize,
    ) -> ExecutionReport {
        let mut report = ExecutionReport { planned: plan.actions().len(), ..Default::default() };
        for (index, action) in plan.actions().iter().enumerate() {
            if self.cancel.is_cancelled() {
                report.stopped = Some(StopReason::Cancelled);
                break;
            }
            let screen_before = self.device.top().to_owned();
            if index > 0 {
                let live = self.current_screen();
                if let Err(d) = ground_action(index, action, &live, &self.scenario.apps) {
                    report.steps.push(StepReport {
                        index,
                        action: action.clone(),
                        status: StepStatus::StalePlan,
                        failure_reason: None,
                        stale_reason: Some(d.class),
                        screen_after: screen_before.clone(),
                        screen_before,
                    });
                    report.stopped = Some(StopReason::StalePlan);
                    break;
                }
            } else {
                debug_assert_eq!(start_screen.screen_id, screen_before);
            }
            let (next, result) = self.scenario.apply_action(&self.device, action);
            let ok = result.is_success();
            if ok {
                self.device = next;
            }
            report.steps.push(StepReport {
                index,
                action: action.clone(),
                status: if ok { StepStatus::Succeeded } else { StepStatus::Failed },
                failure_reason: result.failure_reason,
                stale_reason: None,
                screen_before,
                screen_after: self.device.top().to_owned(),
            });
            self.emit(TurnEvent::ActionExecuted { turn_index, action_index: index, action: action.clone(), result });
            if !ok {
                report.stopped = Some(StopReason::ActionFailed);
                break;
            }
            if result.screen_changed {
                let screen = self.current_screen();
                self.emit(TurnEvent::ScreenChanged { turn_index, screen_id: screen.screen_id.clone(), screen });
            }
        }
        report
    }
}

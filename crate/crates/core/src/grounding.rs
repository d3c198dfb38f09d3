//! Turns raw model output into an [`AgentResponse`] and checks every proposed
//! action against the live screen before anything is executed.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::device::AppRegistry;
use crate::protocol::{ActionType, AgentResponse, ResponseType, UiAction};
use crate::screen::{find_nodes, Bounds, Capability, NodeKey, ScreenContextDocument};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("reply is not a JSON object: {0}")]
    Parse(String),
    #[error("reply does not match the response schema: {0}")]
    Schema(String),
    #[error("reply breaks the response protocol: {0}")]
    Protocol(String),
}

const RESPONSE_FIELDS: [&str; 3] = ["responseType", "text", "actions"];

/// Removes one wrapping markdown code fence (```` ``` ```` or ```` ```json ````), if present.
pub fn strip_code_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return raw;
    };
    let Some((tag, body)) = rest.split_once('\n') else {
        return raw;
    };
    if !tag.trim().chars().all(|c| c.is_ascii_alphanumeric()) {
        return raw;
    }
    match body.trim_end().strip_suffix("```") {
        Some(inner) => inner,
        None => raw,
    }
}

/// Parses one raw model reply. Never panics, whatever the input.
pub fn parse_response(raw: &str) -> Result<AgentResponse, ResponseError> {
    let body = strip_code_fence(raw);
    let value: Value = serde_json::from_str(body).map_err(|e| ResponseError::Parse(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(ResponseError::Parse("expected a single JSON object".into()));
    };
    for field in RESPONSE_FIELDS {
        if !obj.contains_key(field) {
            return Err(ResponseError::Schema(format!("missing field `{field}`")));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !RESPONSE_FIELDS.contains(&k.as_str())) {
        return Err(ResponseError::Schema(format!("unexpected field `{extra}`")));
    }
    let response_type = match &obj["responseType"] {
        Value::String(s) => ResponseType::from_wire(s)
            .ok_or_else(|| ResponseError::Schema(format!("unknown responseType `{s}`")))?,
        _ => return Err(ResponseError::Schema("`responseType` must be a string".into())),
    };
    let text = obj["text"]
        .as_str()
        .ok_or_else(|| ResponseError::Schema("`text` must be a string".into()))?
        .to_owned();
    let actions = obj["actions"]
        .as_array()
        .ok_or_else(|| ResponseError::Schema("`actions` must be an array".into()))?
        .iter()
        .enumerate()
        .map(|(i, a)| UiAction::from_value(a).map_err(|e| ResponseError::Schema(format!("actions[{i}]: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;

    let response = AgentResponse { response_type, text, actions };
    response.check_protocol().map_err(ResponseError::Protocol)?;
    Ok(response)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticClass {
    NoSuchNode,
    CapabilityMissing,
    UnknownApp,
}

impl fmt::Display for DiagnosticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosticClass::NoSuchNode => "no-such-node",
            DiagnosticClass::CapabilityMissing => "capability-missing",
            DiagnosticClass::UnknownApp => "unknown-app",
        })
    }
}

/// Why one action failed to ground.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDiagnostic {
    pub index: usize,
    pub action: UiAction,
    pub class: DiagnosticClass,
    /// Label of the node that was found but lacked the capability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required: Option<Capability>,
}

impl fmt::Display for ActionDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "actions[{}] {}: {}", self.index, self.action.action_type(), self.class)?;
        if let Some(b) = self.action.target() {
            write!(f, " at {b}")?;
        }
        if let Some(cap) = self.required {
            write!(f, " (needs {cap})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct GroundingError {
    pub diagnostics: Vec<ActionDiagnostic>,
}

impl fmt::Display for GroundingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "plan rejected:")?;
        for d in &self.diagnostics {
            write!(f, " {d};")?;
        }
        Ok(())
    }
}

/// The node an action will act on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub action_index: usize,
    pub node: NodeKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedPlan {
    pub response: AgentResponse,
    pub resolved: Vec<Resolution>,
}

impl GroundedPlan {
    pub fn actions(&self) -> &[UiAction] {
        &self.response.actions
    }
}

/// Resolves one action against a screen.
pub fn ground_action(
    index: usize,
    action: &UiAction,
    screen: &ScreenContextDocument,
    apps: &AppRegistry,
) -> Result<Option<Resolution>, ActionDiagnostic> {
    let diag = |class, label: Option<&str>, required| ActionDiagnostic {
        index,
        action: action.clone(),
        class,
        label: label.map(str::to_owned),
        required,
    };
    match action {
        UiAction::Navigate { .. } => Ok(None),
        UiAction::OpenApp { app_name } => match apps.resolve(app_name) {
            Some(_) => Ok(None),
            None => Err(diag(DiagnosticClass::UnknownApp, Some(app_name), None)),
        },
        _ => {
            let bounds: &Bounds = action.target().expect("targeted action");
            let required = action
                .action_type()
                .required_capability()
                .expect("targeted actions need a capability");
            let candidates = find_nodes(screen, bounds);
            let Some(first) = candidates.first() else {
                return Err(diag(DiagnosticClass::NoSuchNode, None, Some(required)));
            };
            match candidates.iter().find(|n| n.has(required)) {
                Some(node) => Ok(Some(Resolution {
                    action_index: index,
                    node: node.key(),
                    label: node.spoken_label().map(str::to_owned),
                })),
                None => Err(diag(DiagnosticClass::CapabilityMissing, first.spoken_label(), Some(required))),
            }
        }
    }
}

/// Validates a whole plan. One bad action rejects the plan; the error lists
/// every failing action.
pub fn ground(
    response: &AgentResponse,
    screen: &ScreenContextDocument,
    apps: &AppRegistry,
) -> Result<GroundedPlan, GroundingError> {
    let mut resolved = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, action) in response.actions.iter().enumerate() {
        match ground_action(i, action, screen, apps) {
            Ok(Some(r)) => resolved.push(r),
            Ok(None) => {}
            Err(d) => diagnostics.push(d),
        }
    }
    if diagnostics.is_empty() {
        Ok(GroundedPlan { response: response.clone(), resolved })
    } else {
        Err(GroundingError { diagnostics })
    }
}

/// Every action type the grounding layer accepts.
pub fn accepted_action_types() -> &'static [ActionType] {
    &ActionType::ALL
}

//! The frozen wire contract between prompt, model and executor: a reply is one
//! JSON object `{"responseType", "text", "actions"}` and each action names one
//! of seven types with exactly the fields that type needs.

use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::screen::{Bounds, Capability};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseType {
    Summarize,
    Action,
    Answer,
    Error,
}

impl ResponseType {
    pub const ALL: [ResponseType; 4] =
        [ResponseType::Summarize, ResponseType::Action, ResponseType::Answer, ResponseType::Error];

    pub fn as_str(&self) -> &'static str {
        match self {
            ResponseType::Summarize => "Summarize",
            ResponseType::Action => "Action",
            ResponseType::Answer => "Answer",
            ResponseType::Error => "Error",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for ResponseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionType {
    Click,
    ScrollForward,
    ScrollBackward,
    SetText,
    SelectText,
    Navigate,
    OpenApp,
}

impl ActionType {
    pub const ALL: [ActionType; 7] = [
        ActionType::Click,
        ActionType::ScrollForward,
        ActionType::ScrollBackward,
        ActionType::SetText,
        ActionType::SelectText,
        ActionType::Navigate,
        ActionType::OpenApp,
    ];

    pub fn wire_name(&self) -> &'static str {
        match self {
            ActionType::Click => "ACTION_CLICK",
            ActionType::ScrollForward => "ACTION_SCROLL_FORWARD",
            ActionType::ScrollBackward => "ACTION_SCROLL_BACKWARD",
            ActionType::SetText => "ACTION_SET_TEXT",
            ActionType::SelectText => "ACTION_SELECT_TEXT",
            ActionType::Navigate => "NAVIGATE",
            ActionType::OpenApp => "OPEN_APP",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.wire_name() == s)
    }

    /// Fields besides `type` that this action must carry, and no others.
    pub fn required_fields(&self) -> &'static [&'static str] {
        match self {
            ActionType::Click
            | ActionType::ScrollForward
            | ActionType::ScrollBackward
            | ActionType::SelectText => &["bounds"],
            ActionType::SetText => &["bounds", "text"],
            ActionType::Navigate => &["navigationType"],
            ActionType::OpenApp => &["app_name"],
        }
    }

    /// Capability the target node must hold; `None` for actions without a target.
    pub fn required_capability(&self) -> Option<Capability> {
        match self {
            ActionType::Click => Some(Capability::Clickable),
            ActionType::ScrollForward | ActionType::ScrollBackward => Some(Capability::Scrollable),
            ActionType::SetText => Some(Capability::Editable),
            ActionType::SelectText => Some(Capability::Selectable),
            ActionType::Navigate | ActionType::OpenApp => None,
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NavigationType {
    Back,
    Home,
}

impl NavigationType {
    pub fn as_str(&self) -> &'static str {
        match self {
            NavigationType::Back => "back",
            NavigationType::Home => "home",
        }
    }
}

/// One executable step of an action plan.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum UiAction {
    Click { bounds: Bounds },
    ScrollForward { bounds: Bounds },
    ScrollBackward { bounds: Bounds },
    SetText { bounds: Bounds, text: String },
    SelectText { bounds: Bounds },
    Navigate { navigation: NavigationType },
    OpenApp { app_name: String },
}

impl UiAction {
    pub fn action_type(&self) -> ActionType {
        match self {
            UiAction::Click { .. } => ActionType::Click,
            UiAction::ScrollForward { .. } => ActionType::ScrollForward,
            UiAction::ScrollBackward { .. } => ActionType::ScrollBackward,
            UiAction::SetText { .. } => ActionType::SetText,
            UiAction::SelectText { .. } => ActionType::SelectText,
            UiAction::Navigate { .. } => ActionType::Navigate,
            UiAction::OpenApp { .. } => ActionType::OpenApp,
        }
    }

    pub fn target(&self) -> Option<&Bounds> {
        match self {
            UiAction::Click { bounds }
            | UiAction::ScrollForward { bounds }
            | UiAction::ScrollBackward { bounds }
            | UiAction::SetText { bounds, .. }
            | UiAction::SelectText { bounds } => Some(bounds),
            UiAction::Navigate { .. } | UiAction::OpenApp { .. } => None,
        }
    }

    /// Validates a wire object against the exact field set of its type.
    pub fn from_value(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("action must be a JSON object")?;
        let type_name = match obj.get("type") {
            Some(Value::String(s)) => s.as_str(),
            Some(_) => return Err("action field `type` must be a string".into()),
            None => return Err("action is missing field `type`".into()),
        };
        let action_type =
            ActionType::from_wire(type_name).ok_or_else(|| format!("unknown action type `{type_name}`"))?;
        let required = action_type.required_fields();
        for key in obj.keys() {
            if key != "type" && !required.contains(&key.as_str()) {
                return Err(format!("field `{key}` is not allowed on {type_name}"));
            }
        }
        for field in required {
            if !obj.contains_key(*field) {
                return Err(format!("{type_name} requires field `{field}`"));
            }
        }

        let bounds = || parse_bounds(&obj["bounds"]);
        Ok(match action_type {
            ActionType::Click => UiAction::Click { bounds: bounds()? },
            ActionType::ScrollForward => UiAction::ScrollForward { bounds: bounds()? },
            ActionType::ScrollBackward => UiAction::ScrollBackward { bounds: bounds()? },
            ActionType::SelectText => UiAction::SelectText { bounds: bounds()? },
            ActionType::SetText => {
                let text = obj["text"].as_str().ok_or("field `text` must be a string")?;
                UiAction::SetText { bounds: bounds()?, text: text.to_owned() }
            }
            ActionType::Navigate => {
                let navigation = match obj["navigationType"].as_str() {
                    Some("back") => NavigationType::Back,
                    Some("home") => NavigationType::Home,
                    _ => return Err("field `navigationType` must be \"back\" or \"home\"".into()),
                };
                UiAction::Navigate { navigation }
            }
            ActionType::OpenApp => match obj["app_name"].as_str() {
                Some(name) if !name.trim().is_empty() => UiAction::OpenApp { app_name: name.to_owned() },
                _ => return Err("field `app_name` must be a non-empty string".into()),
            },
        })
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("actions always serialize")
    }
}

fn parse_bounds(value: &Value) -> Result<Bounds, String> {
    let obj = value.as_object().ok_or("field `bounds` must be an object")?;
    const KEYS: [&str; 4] = ["left", "top", "right", "bottom"];
    if obj.len() != 4 || !KEYS.iter().all(|k| obj.contains_key(*k)) {
        return Err("field `bounds` must have exactly left, top, right, bottom".into());
    }
    let coord = |k: &str| -> Result<i32, String> {
        obj[k]
            .as_i64()
            .and_then(|v| i32::try_from(v).ok())
            .ok_or_else(|| format!("bounds.{k} must be an integer"))
    };
    let b = Bounds::new(coord("left")?, coord("top")?, coord("right")?, coord("bottom")?);
    if b.is_degenerate() {
        return Err(format!("bounds {b} are degenerate"));
    }
    Ok(b)
}

impl Serialize for UiAction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("type", self.action_type().wire_name())?;
        if let Some(b) = self.target() {
            map.serialize_entry("bounds", b)?;
        }
        match self {
            UiAction::SetText { text, .. } => map.serialize_entry("text", text)?,
            UiAction::Navigate { navigation } => map.serialize_entry("navigationType", navigation.as_str())?,
            UiAction::OpenApp { app_name } => map.serialize_entry("app_name", app_name)?,
            _ => {}
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for UiAction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        UiAction::from_value(&value).map_err(D::Error::custom)
    }
}

/// The model's structured reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    #[serde(rename = "responseType")]
    pub response_type: ResponseType,
    pub text: String,
    pub actions: Vec<UiAction>,
}

impl AgentResponse {
    pub fn new(response_type: ResponseType, text: impl Into<String>) -> Self {
        Self { response_type, text: text.into(), actions: Vec::new() }
    }

    pub fn action(text: impl Into<String>, actions: Vec<UiAction>) -> Self {
        Self { response_type: ResponseType::Action, text: text.into(), actions }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("responses always serialize")
    }

    /// Cross-field rules of the protocol.
    pub fn check_protocol(&self) -> Result<(), String> {
        match self.response_type {
            ResponseType::Action if self.actions.is_empty() => {
                Err("an Action reply must carry at least one action".into())
            }
            ResponseType::Action => Ok(()),
            other if !self.actions.is_empty() => Err(format!("a {other} reply must not carry actions")),
            other if self.text.trim().is_empty() => Err(format!("a {other} reply must carry spoken text")),
            _ => Ok(()),
        }
    }
}

//! System prompt and per-turn payload construction.
//!
//! The system prompt pins the structured-reply protocol: input slots, the
//! three-field JSON reply, the action vocabulary, the four-way interaction
//! logic, conventions, error phrasing, and one worked example per reply type.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grounding::parse_response;
use crate::protocol::{ActionType, ResponseType};
use crate::screen::{minimum_budget, prune_tree, ScreenContextDocument};

/// The sentence every system prompt must contain verbatim.
pub const REPLY_REQUIREMENT: &str =
    "Always reply with a single JSON object with exactly the fields responseType, text, actions, and nothing else.";

pub const DEFAULT_HISTORY_BOUND: usize = 6;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid prompt configuration: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneShotExample {
    pub situation: String,
    pub input: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub response_schema_version: String,
    pub screen_char_budget: usize,
    pub payload_char_ceiling: usize,
    #[serde(default = "default_history_bound")]
    pub history_bound: usize,
    pub verbosity_guidelines: String,
    pub scroll_convention: String,
    pub examples: Vec<OneShotExample>,
}

fn default_history_bound() -> usize {
    DEFAULT_HISTORY_BOUND
}

impl Default for PromptConfig {
    fn default() -> Self {
        let text = include_str!("../fixtures/prompt/default.toml");
        Self::from_toml(text).expect("shipped prompt config is valid")
    }
}

impl PromptConfig {
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let config: PromptConfig = toml::from_str(text).map_err(|e| PromptError::ConfigInvalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Reply type of each example, parsed with the same parser used on live replies.
    fn example_types(&self) -> Result<Vec<ResponseType>, PromptError> {
        self.examples
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                parse_response(ex.reply.trim())
                    .map(|r| r.response_type)
                    .map_err(|e| PromptError::ConfigInvalid(format!("example {i}: {e}")))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let types = self.example_types()?;
        for t in ResponseType::ALL {
            if !types.contains(&t) {
                return Err(PromptError::ConfigInvalid(format!("no one-shot example with responseType {t}")));
            }
        }
        if self.screen_char_budget == 0 || self.payload_char_ceiling <= self.screen_char_budget {
            return Err(PromptError::ConfigInvalid(
                "payload_char_ceiling must exceed a non-zero screen_char_budget".into(),
            ));
        }
        Ok(())
    }
}

fn section(out: &mut String, title: &str) {
    let _ = write!(out, "\n## {title}\n");
}

/// Renders the system prompt. Deterministic in `config`.
pub fn build_system_prompt(config: &PromptConfig) -> Result<String, PromptError> {
    config.validate()?;
    let types = config.example_types()?;
    let mut p = String::new();

    p.push_str(
        "You are Insight, a screen-access assistant for blind and visually impaired people using an Android phone. \
         You receive the phone's current screen as an accessibility tree and you either describe it, answer questions \
         about it, or operate it on the user's behalf.\n",
    );

    section(&mut p, "Inputs");
    p.push_str(
        "Each turn you receive one JSON object with these slots:\n\
         - screen_context: the current screen as a hierarchical JSON document. Every element has a role, optional text \
         and description, its bounds (left, top, right, bottom in pixels), its capabilities (clickable, scrollable, \
         editable, selectable, focusable) and its children. An element with \"pruned\": n had n descendants removed to \
         save space.\n\
         - user_query: the user's transcribed voice command, or null when the user said nothing.\n\
         - history: the most recent earlier turns (user_query, responseType, text), oldest first.\n",
    );

    section(&mut p, "Output");
    p.push_str(REPLY_REQUIREMENT);
    let _ = write!(
        p,
        "\nResponse schema {}:\n\
         - responseType: one of \"Summarize\", \"Action\", \"Answer\", \"Error\".\n\
         - text: what will be spoken to the user.\n\
         - actions: the list of UI actions to execute in order. It is non-empty for Action and empty ([]) for every \
         other responseType.\n\
         Do not wrap the object in prose. Do not add fields.\n",
        config.response_schema_version
    );

    section(&mut p, "Actions");
    p.push_str("Each action object has a \"type\" and exactly the fields listed for that type:\n");
    for t in ActionType::ALL {
        let fields = t.required_fields().join(", ");
        let what = match t {
            ActionType::Click => "tap a clickable element",
            ActionType::ScrollForward => "scroll a scrollable element forward (down)",
            ActionType::ScrollBackward => "scroll a scrollable element backward (up)",
            ActionType::SetText => "replace the text of an editable element",
            ActionType::SelectText => "select the text of a selectable element",
            ActionType::Navigate => "system navigation; navigationType is \"back\" or \"home\"",
            ActionType::OpenApp => "the open_app directive; launch an installed app by its name",
        };
        let _ = writeln!(p, "- {}: {what}. Fields: {fields}.", t.wire_name());
    }
    p.push_str(
        "Rules:\n\
         - bounds must be copied exactly from an element in screen_context, as an object \
         {\"left\": .., \"top\": .., \"right\": .., \"bottom\": ..}. Never invent or adjust bounds.\n\
         - The target element must have the matching capability: clickable for ACTION_CLICK, scrollable for scrolling, \
         editable for ACTION_SET_TEXT, selectable for ACTION_SELECT_TEXT.\n\
         - Use NAVIGATE with navigationType \"back\" to return to the previous screen and \"home\" to go to the \
         launcher. Navigation actions have no bounds.\n\
         - Every targeted action must refer to the screen you were given. If reaching the goal needs another screen, \
         perform the first step; you will see the new screen next turn.\n",
    );

    section(&mut p, "Interaction logic");
    p.push_str(
        "1. screen_context only (user_query is null): give a comprehensive summary of the screen. responseType \
         Summarize.\n\
         2. screen_context and an instruction: interpret it and produce the sequence of actions. responseType Action. \
         Keep text to a brief confirmation.\n\
         3. screen_context and a question: answer from the screen content. responseType Answer.\n\
         4. screen_context and a request that is irrelevant or cannot be done here: explain helpfully. responseType \
         Error.\n\
         When a command is vague, treat it as an instruction (case 2) rather than a question.\n",
    );

    section(&mut p, "Conventions");
    p.push_str(config.scroll_convention.trim());
    p.push('\n');

    section(&mut p, "Guidelines");
    p.push_str(config.verbosity_guidelines.trim());
    p.push_str(
        "\nIf you cannot fulfil a request, say clearly what went wrong and what the user can do instead, for example: \
         \"I couldn't find the 'Submit' button on this screen.\"\n",
    );

    section(&mut p, "Examples");
    for (i, (ex, t)) in config.examples.iter().zip(&types).enumerate() {
        let _ = write!(
            p,
            "Example {} ({t}): {}\nInput:\n{}\nReply:\n{}\n\n",
            i + 1,
            ex.situation.trim(),
            ex.input.trim(),
            ex.reply.trim()
        );
    }
    Ok(p.trim_end().to_owned() + "\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub user_query: Option<String>,
    #[serde(rename = "responseType")]
    pub response_type: ResponseType,
    pub text: String,
}

/// Everything sent to the backend for one completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnPayload {
    pub system_prompt: String,
    pub screen_id: String,
    /// Canonical text of the (possibly pruned) screen document.
    pub screen_context: String,
    pub user_query: Option<String>,
    pub history: Vec<HistoryEntry>,
}

impl TurnPayload {
    /// The user message: screen text embedded verbatim, absent query as an explicit `null`.
    pub fn user_message(&self) -> String {
        let query = serde_json::to_string(&self.user_query).expect("string serializes");
        let history = serde_json::to_string(&self.history).expect("history serializes");
        format!("{{\"screen_context\":{},\"user_query\":{query},\"history\":{history}}}", self.screen_context)
    }

    pub fn char_count(&self) -> usize {
        self.system_prompt.chars().count() + self.user_message().chars().count()
    }

    /// SHA-256 over system prompt and user message; the record-replay key.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system_prompt.as_bytes());
        h.update([0u8]);
        h.update(self.user_message().as_bytes());
        hex::encode(h.finalize())
    }
}

/// A validated configuration with its rendered system prompt.
#[derive(Debug, Clone)]
pub struct PromptEngine {
    config: PromptConfig,
    system_prompt: String,
}

impl PromptEngine {
    pub fn new(config: PromptConfig) -> Result<Self, PromptError> {
        let system_prompt = build_system_prompt(&config)?;
        Ok(Self { config, system_prompt })
    }

    pub fn config(&self) -> &PromptConfig {
        &self.config
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    /// Builds one payload. The screen is pruned to the configured budget, history
    /// is cut to its bound, and further old turns are dropped while the payload
    /// exceeds the ceiling.
    pub fn build_turn(
        &self,
        screen: &ScreenContextDocument,
        query: Option<&str>,
        history: &[HistoryEntry],
    ) -> TurnPayload {
        let budget = self.config.screen_char_budget.max(minimum_budget(screen));
        let pruned = prune_tree(screen, budget).expect("budget is at least the minimum");
        let screen_context = serde_json::to_string(&pruned).expect("screen serializes");
        let keep = history.len().saturating_sub(self.config.history_bound);
        let mut payload = TurnPayload {
            system_prompt: self.system_prompt.clone(),
            screen_id: screen.screen_id.clone(),
            screen_context,
            user_query: query.map(str::to_owned),
            history: history[keep..].to_vec(),
        };
        while payload.char_count() > self.config.payload_char_ceiling && !payload.history.is_empty() {
            payload.history.remove(0);
        }
        payload
    }
}

impl Default for PromptEngine {
    fn default() -> Self {
        Self::new(PromptConfig::default()).expect("default prompt config is valid")
    }
}

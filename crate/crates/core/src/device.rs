//! A deterministic virtual phone. Screens, transitions and controls come from
//! fixture files; state transitions are pure functions `(state, action) -> (state', result)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures::FixtureSource;
use crate::protocol::{NavigationType, UiAction};
use crate::screen::{find_nodes, parse_screen, Bounds, Capability, NodeKey, Role, ScreenContextDocument, ScreenNode};

/// Maximum back-history depth, launcher included.
pub const STACK_CAPACITY: usize = 32;
/// Media volume change per press of a volume control.
pub const VOLUME_STEP: u8 = 10;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("fixture {file}: {message}")]
    Fixture { file: String, message: String },
}

fn fixture_err(file: &str, message: impl fmt::Display) -> DeviceError {
    DeviceError::Fixture { file: file.to_owned(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppEntry {
    pub name: String,
    pub entry_screen: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// Installed apps, looked up case-insensitively by name or alias.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppRegistry {
    apps: Vec<AppEntry>,
}

impl AppRegistry {
    pub fn new(apps: Vec<AppEntry>) -> Self {
        Self { apps }
    }

    pub fn resolve(&self, name: &str) -> Option<&AppEntry> {
        let wanted = name.trim().to_lowercase();
        self.apps.iter().find(|a| {
            a.name.to_lowercase() == wanted || a.aliases.iter().any(|x| x.to_lowercase() == wanted)
        })
    }

    pub fn apps(&self) -> &[AppEntry] {
        &self.apps
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Effect {
    VolumeUp,
    VolumeDown,
    Toggle { key: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Goal {
    /// Media volume strictly above its reset value.
    VolumeIncreased,
    /// The last Answer or Summarize text names a cart item.
    CartItemSpoken,
    None,
}

/// Matches nodes by screen, role and label substring; unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodePredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

impl NodePredicate {
    pub fn matches(&self, screen_id: &str, node: &ScreenNode) -> bool {
        if self.screen_id.as_deref().is_some_and(|s| s != screen_id) {
            return false;
        }
        if self.role.is_some_and(|r| r != node.role) {
            return false;
        }
        match &self.text_contains {
            None => true,
            Some(needle) => [&node.text, &node.description]
                .into_iter()
                .flatten()
                .any(|t| t.contains(needle.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRef {
    screen_id: String,
    bounds: Bounds,
    role: Role,
}

impl NodeRef {
    fn slot(&self) -> (String, NodeKey) {
        (self.screen_id.clone(), NodeKey { bounds: self.bounds, role: self.role })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionFile {
    #[serde(flatten)]
    node: NodeRef,
    target: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlFile {
    #[serde(flatten)]
    node: NodeRef,
    effect: Effect,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScrollPagesFile {
    #[serde(flatten)]
    node: NodeRef,
    pages: Vec<Vec<ScreenNode>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    world_id: String,
    home_screen: String,
    apps: Vec<AppEntry>,
    screens: Vec<String>,
    #[serde(default)]
    transitions: Vec<TransitionFile>,
    #[serde(default)]
    controls: Vec<ControlFile>,
    #[serde(default)]
    scroll_pages: Vec<ScrollPagesFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario_id: String,
    title: String,
    world: String,
    initial_screen: String,
    app_data: AppData,
    goal: Goal,
    #[serde(default)]
    baseline_goal: Option<NodePredicate>,
    #[serde(default)]
    commands: Vec<Option<String>>,
    #[serde(default)]
    script: Option<String>,
}

/// Persistent per-device values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppData {
    pub media_volume: u8,
    #[serde(default)]
    pub cart_items: Vec<String>,
    #[serde(default)]
    pub toggles: BTreeMap<String, bool>,
    /// Text typed into fields, keyed by `screen_id/role[l,t][r,b]`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub field_text: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub selections: BTreeSet<String>,
    /// Page index of each paged list, keyed like `field_text`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scroll_offsets: BTreeMap<String, usize>,
}

fn slot_key(screen_id: &str, key: &NodeKey) -> String {
    format!("{screen_id}/{key}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceState {
    pub current_app: String,
    /// Back-navigation history; the last entry is the visible screen.
    pub screen_stack: Vec<String>,
    pub app_data: AppData,
}

impl DeviceState {
    pub fn top(&self) -> &str {
        self.screen_stack.last().expect("screen stack is never empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    NoSuchNode,
    CapabilityMissing,
    NoBackHistory,
    UnknownApp,
    NotScrollable,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::NoSuchNode => "no-such-node",
            FailureReason::CapabilityMissing => "capability-missing",
            FailureReason::NoBackHistory => "no-back-history",
            FailureReason::UnknownApp => "unknown-app",
            FailureReason::NotScrollable => "not-scrollable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionResult {
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<FailureReason>,
    pub screen_changed: bool,
}

impl ActionResult {
    pub fn success(screen_changed: bool) -> Self {
        Self { outcome: Outcome::Success, failure_reason: None, screen_changed }
    }

    pub fn failure(reason: FailureReason) -> Self {
        Self { outcome: Outcome::Failure, failure_reason: Some(reason), screen_changed: false }
    }

    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

/// One loaded scenario: the world it runs in plus its initial state and goal.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub title: String,
    pub goal: Goal,
    pub baseline_goal: Option<NodePredicate>,
    /// Default command script; `None` entries are no-query (summarize) turns.
    pub commands: Vec<Option<String>>,
    /// Name of the scripted-backend reply file under `scripts/`.
    pub script: Option<String>,
    pub apps: AppRegistry,
    home_screen: String,
    initial_screen: String,
    initial_data: AppData,
    screens: BTreeMap<String, ScreenContextDocument>,
    transitions: HashMap<(String, NodeKey), String>,
    controls: HashMap<(String, NodeKey), Effect>,
    scroll_pages: HashMap<(String, NodeKey), Vec<Vec<ScreenNode>>>,
}

impl Scenario {
    pub fn load(source: &dyn FixtureSource, scenario_id: &str) -> Result<Self, DeviceError> {
        let file = format!("scenarios/{scenario_id}.json");
        let text = source.read(&file).map_err(|_| DeviceError::UnknownScenario(scenario_id.to_owned()))?;
        let sf: ScenarioFile = serde_json::from_str(&text).map_err(|e| fixture_err(&file, e))?;
        if sf.scenario_id != scenario_id {
            return Err(fixture_err(&file, format!("declares scenario_id `{}`", sf.scenario_id)));
        }
        let world_file = format!("worlds/{}.json", sf.world);
        let wtext = source.read(&world_file).map_err(|e| fixture_err(&world_file, e))?;
        let world: WorldFile = serde_json::from_str(&wtext).map_err(|e| fixture_err(&world_file, e))?;

        let mut screens = BTreeMap::new();
        for id in &world.screens {
            let sfile = format!("screens/{id}.json");
            let stext = source.read(&sfile).map_err(|e| fixture_err(&sfile, e))?;
            let doc = parse_screen(&stext).map_err(|e| fixture_err(&sfile, e))?;
            if doc.screen_id != *id {
                return Err(fixture_err(&sfile, format!("declares screen_id `{}`", doc.screen_id)));
            }
            screens.insert(id.clone(), doc);
        }

        let known_screen = |id: &str, what: &str| -> Result<(), DeviceError> {
            if screens.contains_key(id) {
                Ok(())
            } else {
                Err(fixture_err(&world_file, format!("{what} refers to unknown screen `{id}`")))
            }
        };
        let known_node = |r: &NodeRef, what: &str| -> Result<(), DeviceError> {
            known_screen(&r.screen_id, what)?;
            let doc = &screens[&r.screen_id];
            let key = NodeKey { bounds: r.bounds, role: r.role };
            let paged = world.scroll_pages.iter().any(|p| {
                p.node.screen_id == r.screen_id && p.pages.iter().flatten().any(|n| n.iter().any(|(n, _)| n.key() == key))
            });
            if crate::screen::find_by_key(doc, &key).is_none() && !paged {
                return Err(fixture_err(&world_file, format!("{what} node {key} not on screen `{}`", r.screen_id)));
            }
            Ok(())
        };

        known_screen(&world.home_screen, "home_screen")?;
        known_screen(&sf.initial_screen, "initial_screen").map_err(|_| {
            fixture_err(&file, format!("initial_screen `{}` is not in world `{}`", sf.initial_screen, sf.world))
        })?;
        for app in &world.apps {
            known_screen(&app.entry_screen, "app entry")?;
        }
        let mut transitions = HashMap::new();
        for t in &world.transitions {
            known_node(&t.node, "transition")?;
            known_screen(&t.target, "transition target")?;
            transitions.insert(t.node.slot(), t.target.clone());
        }
        let mut controls = HashMap::new();
        for c in &world.controls {
            known_node(&c.node, "control")?;
            controls.insert(c.node.slot(), c.effect.clone());
        }
        let mut scroll_pages = HashMap::new();
        for p in &world.scroll_pages {
            known_node(&p.node, "scroll_pages")?;
            if p.pages.is_empty() {
                return Err(fixture_err(&world_file, "scroll_pages entry without pages"));
            }
            scroll_pages.insert(p.node.slot(), p.pages.clone());
        }
        if sf.app_data.media_volume > 100 {
            return Err(fixture_err(&file, "media_volume above 100"));
        }

        let scenario = Scenario {
            id: sf.scenario_id,
            title: sf.title,
            goal: sf.goal,
            baseline_goal: sf.baseline_goal,
            commands: sf.commands,
            script: sf.script,
            apps: AppRegistry::new(world.apps),
            home_screen: world.home_screen,
            initial_screen: sf.initial_screen,
            initial_data: sf.app_data,
            screens,
            transitions,
            controls,
            scroll_pages,
        };
        // Every page of every paged list must render into a valid screen.
        for ((screen_id, key), pages) in &scenario.scroll_pages {
            for page in 0..pages.len() {
                let mut state = scenario.reset();
                state.screen_stack = vec![screen_id.clone()];
                state.app_data.scroll_offsets.insert(slot_key(screen_id, key), page);
                scenario
                    .current_screen(&state)
                    .validate()
                    .map_err(|e| fixture_err(&world_file, format!("{screen_id} page {page}: {e}")))?;
            }
        }
        Ok(scenario)
    }

    pub fn home_screen(&self) -> &str {
        &self.home_screen
    }

    pub fn initial_data(&self) -> &AppData {
        &self.initial_data
    }

    pub fn screen_ids(&self) -> impl Iterator<Item = &str> {
        self.screens.keys().map(String::as_str)
    }

    /// The fixture document for a screen, before any state is applied.
    pub fn base_screen(&self, screen_id: &str) -> Option<&ScreenContextDocument> {
        self.screens.get(screen_id)
    }

    /// Target screen of a transition declared on `key`, if any.
    pub fn transition(&self, screen_id: &str, key: &NodeKey) -> Option<&str> {
        self.transitions.get(&(screen_id.to_owned(), *key)).map(String::as_str)
    }

    /// Transitions declared on a screen, in document order of their nodes.
    pub fn transitions_from(&self, screen_id: &str) -> Vec<(NodeKey, &str)> {
        let Some(doc) = self.screens.get(screen_id) else { return Vec::new() };
        doc.nodes()
            .filter_map(|(n, _)| self.transition(screen_id, &n.key()).map(|t| (n.key(), t)))
            .collect()
    }

    /// Documented initial state; deterministic.
    pub fn reset(&self) -> DeviceState {
        let mut stack = vec![self.home_screen.clone()];
        if self.initial_screen != self.home_screen {
            stack.push(self.initial_screen.clone());
        }
        let current_app = self.screens[&self.initial_screen].app.clone();
        DeviceState { current_app, screen_stack: stack, app_data: self.initial_data.clone() }
    }

    /// Renders the visible screen. Pure in `state`.
    pub fn current_screen(&self, state: &DeviceState) -> ScreenContextDocument {
        let screen_id = state.top();
        let mut doc = self.screens[screen_id].clone();
        self.apply_pages(screen_id, &mut doc.root, &state.app_data);
        fill_placeholders(screen_id, &mut doc.root, &state.app_data);
        doc
    }

    fn apply_pages(&self, screen_id: &str, node: &mut ScreenNode, data: &AppData) {
        if let Some(pages) = self.scroll_pages.get(&(screen_id.to_owned(), node.key())) {
            let page = data.scroll_offsets.get(&slot_key(screen_id, &node.key())).copied().unwrap_or(0);
            node.children = pages[page.min(pages.len() - 1)].clone();
        }
        for child in &mut node.children {
            self.apply_pages(screen_id, child, data);
        }
    }

    /// True when `key` sits inside a paged list that is scrolled away from its
    /// first page. Transitions and controls are declared against first pages only.
    fn on_later_page(&self, screen_id: &str, root: &ScreenNode, key: &NodeKey, data: &AppData) -> bool {
        fn path_to<'a>(node: &'a ScreenNode, key: &NodeKey, acc: &mut Vec<&'a ScreenNode>) -> bool {
            if node.key() == *key {
                return true;
            }
            acc.push(node);
            for c in &node.children {
                if path_to(c, key, acc) {
                    return true;
                }
            }
            acc.pop();
            false
        }
        let mut ancestors = Vec::new();
        path_to(root, key, &mut ancestors);
        ancestors.iter().any(|a| {
            self.scroll_pages.contains_key(&(screen_id.to_owned(), a.key()))
                && data.scroll_offsets.get(&slot_key(screen_id, &a.key())).copied().unwrap_or(0) > 0
        })
    }

    fn push_screen(&self, state: &mut DeviceState, target: &str) {
        if state.screen_stack.len() >= STACK_CAPACITY {
            state.screen_stack.remove(1);
        }
        state.screen_stack.push(target.to_owned());
        state.current_app = self.screens[target].app.clone();
    }

    /// Applies one action. Failures leave the state untouched.
    pub fn apply_action(&self, state: &DeviceState, action: &UiAction) -> (DeviceState, ActionResult) {
        match self.try_apply(state, action) {
            Ok((next, changed)) => (next, ActionResult::success(changed)),
            Err(reason) => (state.clone(), ActionResult::failure(reason)),
        }
    }

    fn try_apply(&self, state: &DeviceState, action: &UiAction) -> Result<(DeviceState, bool), FailureReason> {
        let mut next = state.clone();
        let screen_id = state.top().to_owned();
        let changed = match action {
            UiAction::Navigate { navigation: NavigationType::Back } => {
                if next.screen_stack.len() <= 1 {
                    return Err(FailureReason::NoBackHistory);
                }
                next.screen_stack.pop();
                next.current_app = self.screens[next.top()].app.clone();
                true
            }
            UiAction::Navigate { navigation: NavigationType::Home } => {
                let changed = next.screen_stack.len() > 1;
                next.screen_stack.truncate(1);
                next.current_app = self.screens[next.top()].app.clone();
                changed
            }
            UiAction::OpenApp { app_name } => {
                let app = self.apps.resolve(app_name).ok_or(FailureReason::UnknownApp)?;
                if next.top() == app.entry_screen {
                    false
                } else {
                    self.push_screen(&mut next, &app.entry_screen);
                    true
                }
            }
            _ => {
                let screen = self.current_screen(state);
                let bounds = action.target().expect("targeted action");
                let required = action.action_type().required_capability().expect("targeted action");
                let candidates = find_nodes(&screen, bounds);
                if candidates.is_empty() {
                    return Err(FailureReason::NoSuchNode);
                }
                let node = candidates.into_iter().find(|n| n.has(required)).ok_or(match required {
                    Capability::Scrollable => FailureReason::NotScrollable,
                    _ => FailureReason::CapabilityMissing,
                })?;
                let key = node.key();
                let slot = slot_key(&screen_id, &key);
                let data = &mut next.app_data;
                match action {
                    UiAction::Click { .. } => {
                        let sk = (screen_id.clone(), key);
                        if self.on_later_page(&screen_id, &screen.root, &key, &state.app_data) {
                            false
                        } else if let Some(target) = self.transitions.get(&sk) {
                            self.push_screen(&mut next, target);
                            true
                        } else if let Some(effect) = self.controls.get(&sk) {
                            match effect {
                                Effect::VolumeUp => {
                                    let v = data.media_volume;
                                    data.media_volume = v.saturating_add(VOLUME_STEP).min(100);
                                    data.media_volume != v
                                }
                                Effect::VolumeDown => {
                                    let v = data.media_volume;
                                    data.media_volume = v.saturating_sub(VOLUME_STEP);
                                    data.media_volume != v
                                }
                                Effect::Toggle { key } => {
                                    let t = data.toggles.entry(key.clone()).or_insert(false);
                                    *t = !*t;
                                    true
                                }
                            }
                        } else {
                            false
                        }
                    }
                    UiAction::ScrollForward { .. } | UiAction::ScrollBackward { .. } => {
                        match self.scroll_pages.get(&(screen_id.clone(), key)) {
                            Some(pages) => {
                                let cur = data.scroll_offsets.get(&slot).copied().unwrap_or(0);
                                let new = if matches!(action, UiAction::ScrollForward { .. }) {
                                    (cur + 1).min(pages.len() - 1)
                                } else {
                                    cur.saturating_sub(1)
                                };
                                if new == 0 {
                                    data.scroll_offsets.remove(&slot);
                                } else {
                                    data.scroll_offsets.insert(slot, new);
                                }
                                new != cur
                            }
                            None => false,
                        }
                    }
                    UiAction::SetText { text, .. } => data.field_text.insert(slot, text.clone()).as_deref() != Some(text),
                    UiAction::SelectText { .. } => {
                        data.selections.insert(slot);
                        false
                    }
                    UiAction::Navigate { .. } | UiAction::OpenApp { .. } => unreachable!(),
                }
            }
        };
        Ok((next, changed))
    }

    /// Goal predicate. `last_spoken` is the text of the session's most recent
    /// Answer or Summarize reply.
    pub fn goal_reached(&self, state: &DeviceState, last_spoken: Option<&str>) -> bool {
        match self.goal {
            Goal::VolumeIncreased => state.app_data.media_volume > self.initial_data.media_volume,
            Goal::CartItemSpoken => last_spoken.is_some_and(|text| {
                let text = text.to_lowercase();
                self.initial_data.cart_items.iter().any(|item| text.contains(&item.to_lowercase()))
            }),
            Goal::None => false,
        }
    }
}

fn fill_placeholders(screen_id: &str, node: &mut ScreenNode, data: &AppData) {
    for field in [&mut node.text, &mut node.description].into_iter().flatten() {
        if field.contains('{') {
            *field = substitute(field, data);
        }
    }
    if node.role == Role::TextField {
        if let Some(t) = data.field_text.get(&slot_key(screen_id, &node.key())) {
            node.text = Some(t.clone());
        }
    }
    for child in &mut node.children {
        fill_placeholders(screen_id, child, data);
    }
}

/// Replaces `{media_volume}` and `{toggle:<key>}` with live values.
fn substitute(template: &str, data: &AppData) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let Some(len) = rest[start..].find('}') else {
            out.push_str(&rest[start..]);
            return out;
        };
        let name = &rest[start + 1..start + len];
        match name {
            "media_volume" => out.push_str(&data.media_volume.to_string()),
            _ => match name.strip_prefix("toggle:") {
                Some(k) => out.push_str(if data.toggles.get(k).copied().unwrap_or(false) { "On" } else { "Off" }),
                None => out.push_str(&rest[start..=start + len]),
            },
        }
        rest = &rest[start + len + 1..];
    }
    out.push_str(rest);
    out
}

/// All scenarios available from one fixture source.
pub struct ScenarioCatalog {
    source: Arc<dyn FixtureSource>,
    scenarios: BTreeMap<String, Arc<Scenario>>,
}

impl ScenarioCatalog {
    pub fn load(source: Arc<dyn FixtureSource>) -> Result<Self, DeviceError> {
        let ids = source.list("scenarios", "json").map_err(|e| fixture_err("scenarios/", e))?;
        let mut scenarios = BTreeMap::new();
        for id in ids {
            let s = Scenario::load(source.as_ref(), &id)?;
            scenarios.insert(id, Arc::new(s));
        }
        Ok(Self { source, scenarios })
    }

    pub fn builtin() -> Self {
        Self::load(Arc::new(crate::fixtures::EmbeddedSource)).expect("shipped fixtures are valid")
    }

    pub fn source(&self) -> &Arc<dyn FixtureSource> {
        &self.source
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.scenarios.keys().map(String::as_str)
    }

    pub fn get(&self, scenario_id: &str) -> Result<Arc<Scenario>, DeviceError> {
        self.scenarios
            .get(scenario_id)
            .cloned()
            .ok_or_else(|| DeviceError::UnknownScenario(scenario_id.to_owned()))
    }

    pub fn reset(&self, scenario_id: &str) -> Result<DeviceState, DeviceError> {
        Ok(self.get(scenario_id)?.reset())
    }

    pub fn goal_reached(
        &self,
        scenario_id: &str,
        state: &DeviceState,
        last_spoken: Option<&str>,
    ) -> Result<bool, DeviceError> {
        Ok(self.get(scenario_id)?.goal_reached(state, last_spoken))
    }
}

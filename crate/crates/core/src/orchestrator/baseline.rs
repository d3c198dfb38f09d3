use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceError, NodePredicate, ScenarioCatalog};
use crate::protocol::UiAction;
use crate::screen::NodeKey;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("no node matching the goal is reachable from scenario `{0}`")]
    GoalUnreachable(String),
    #[error("scenario `{0}` declares no baseline goal")]
    NoGoal(String),
}

/// Focus work spent on one screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineStep {
    pub screen_id: String,
    /// Focus moves from the top of the screen to the node.
    pub focus_moves: usize,
    /// The node activated to move on, or the goal node on the last screen.
    pub target_label: Option<String>,
    pub activated: bool,
}

/// Cost of reaching the goal by walking every element in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub scenario_id: String,
    pub goal: NodePredicate,
    pub steps: Vec<BaselineStep>,
    pub focus_moves: usize,
    pub activations: usize,
}

impl BaselineReport {
    /// Every discrete user input: focus moves plus activations.
    pub fn interactions(&self) -> usize {
        self.focus_moves + self.activations
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "baseline {}", self.scenario_id);
        let _ = writeln!(out, "{:<18} {:>11} {:<9} target", "screen", "focus moves", "activate");
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{:<18} {:>11} {:<9} {}",
                s.screen_id,
                s.focus_moves,
                if s.activated { "yes" } else { "no" },
                s.target_label.as_deref().unwrap_or("-")
            );
        }
        let _ = writeln!(out, "focus_moves={} activations={}", self.focus_moves, self.activations);
        out
    }
}

/// Simulates a linear screen reader. Focus starts before the first node of
/// each screen and advances one node at a time in depth-first document order.
/// The screen path is the shortest chain of declared transitions from the
/// initial screen to one holding a goal node.
pub fn run_baseline_traversal(
    catalog: &ScenarioCatalog,
    scenario_id: &str,
    goal: Option<&NodePredicate>,
) -> Result<BaselineReport, BaselineError> {
    let scenario = catalog.get(scenario_id)?;
    let goal = match goal.or(scenario.baseline_goal.as_ref()) {
        Some(g) => g.clone(),
        None => return Err(BaselineError::NoGoal(scenario_id.to_owned())),
    };
    let unreachable = || BaselineError::GoalUnreachable(scenario_id.to_owned());

    let mut state = scenario.reset();
    let start = state.top().to_owned();
    let holds_goal = |screen_id: &str| {
        scenario
            .base_screen(screen_id)
            .is_some_and(|doc| doc.nodes().any(|(n, _)| goal.matches(screen_id, n)))
    };

    // Breadth-first over screens; neighbours in document order keep it deterministic.
    let mut via: BTreeMap<String, Option<(String, NodeKey)>> = BTreeMap::new();
    via.insert(start.clone(), None);
    let mut queue = VecDeque::from([start.clone()]);
    let mut found = None;
    while let Some(id) = queue.pop_front() {
        if holds_goal(&id) {
            found = Some(id);
            break;
        }
        for (key, target) in scenario.transitions_from(&id) {
            if !via.contains_key(target) {
                via.insert(target.to_owned(), Some((id.clone(), key)));
                queue.push_back(target.to_owned());
            }
        }
    }
    let goal_screen = found.ok_or_else(unreachable)?;
    let mut hops = Vec::new();
    let mut cur = goal_screen.clone();
    while let Some(Some((prev, key))) = via.get(&cur) {
        hops.push(*key);
        cur = prev.clone();
    }
    hops.reverse();

    let mut report = BaselineReport {
        scenario_id: scenario_id.to_owned(),
        goal: goal.clone(),
        steps: Vec::new(),
        focus_moves: 0,
        activations: 0,
    };
    for key in hops {
        let screen = scenario.current_screen(&state);
        let (position, node) = screen
            .nodes()
            .enumerate()
            .find(|(_, (n, _))| n.key() == key)
            .map(|(i, (n, _))| (i + 1, n))
            .ok_or_else(unreachable)?;
        report.steps.push(BaselineStep {
            screen_id: screen.screen_id.clone(),
            focus_moves: position,
            target_label: node.spoken_label().map(str::to_owned),
            activated: true,
        });
        report.focus_moves += position;
        report.activations += 1;
        let (next, result) = scenario.apply_action(&state, &UiAction::Click { bounds: key.bounds });
        if !result.is_success() {
            return Err(unreachable());
        }
        state = next;
    }

    let screen = scenario.current_screen(&state);
    let (position, node) = screen
        .nodes()
        .enumerate()
        .find(|(_, (n, _))| goal.matches(&screen.screen_id, n))
        .map(|(i, (n, _))| (i + 1, n))
        .ok_or_else(unreachable)?;
    report.steps.push(BaselineStep {
        screen_id: screen.screen_id.clone(),
        focus_moves: position,
        target_label: node.spoken_label().map(str::to_owned),
        activated: false,
    });
    report.focus_moves += position;
    Ok(report)
}

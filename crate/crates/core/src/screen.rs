//! Accessibility tree data model and its canonical JSON document form.
//!
//! A [`ScreenContextDocument`] is the unit exchanged with the model backend:
//! one hierarchical JSON object per screen, nested exactly like the tree.
//! Serialization is canonical (fixed key order, compact), so two documents
//! serialize to the same bytes exactly when they are structurally equal.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual screen width used by every shipped fixture.
pub const SCREEN_WIDTH: i32 = 1080;
/// Virtual screen height used by every shipped fixture.
pub const SCREEN_HEIGHT: i32 = 2400;

/// Axis-aligned rectangle in virtual screen pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    pub const fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Self { left, top, right, bottom }
    }

    pub fn is_degenerate(&self) -> bool {
        self.left >= self.right || self.top >= self.bottom
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }

    /// True when `other` lies entirely inside `self` (edges may touch).
    pub fn contains(&self, other: &Bounds) -> bool {
        other.left >= self.left
            && other.top >= self.top
            && other.right <= self.right
            && other.bottom <= self.bottom
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}][{},{}]", self.left, self.top, self.right, self.bottom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Button,
    Text,
    TextField,
    List,
    ListItem,
    Image,
    Tab,
    Toggle,
    Container,
}

impl Role {
    pub const ALL: [Role; 9] = [
        Role::Button,
        Role::Text,
        Role::TextField,
        Role::List,
        Role::ListItem,
        Role::Image,
        Role::Tab,
        Role::Toggle,
        Role::Container,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Button => "button",
            Role::Text => "text",
            Role::TextField => "text-field",
            Role::List => "list",
            Role::ListItem => "list-item",
            Role::Image => "image",
            Role::Tab => "tab",
            Role::Toggle => "toggle",
            Role::Container => "container",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Clickable,
    Scrollable,
    Editable,
    Selectable,
    Focusable,
}

impl Capability {
    pub const ALL: [Capability; 5] = [
        Capability::Clickable,
        Capability::Scrollable,
        Capability::Editable,
        Capability::Selectable,
        Capability::Focusable,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Capability::Clickable => "clickable",
            Capability::Scrollable => "scrollable",
            Capability::Editable => "editable",
            Capability::Selectable => "selectable",
            Capability::Focusable => "focusable",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of a node within one screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey {
    pub bounds: Bounds,
    pub role: Role,
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.role, self.bounds)
    }
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

/// One UI element of the accessibility tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenNode {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub bounds: Bounds,
    pub capabilities: BTreeSet<Capability>,
    /// Number of descendants dropped by [`prune_tree`] when the budget forced
    /// removal of meaningful nodes.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub pruned: u32,
    pub children: Vec<ScreenNode>,
}

impl ScreenNode {
    pub fn new(role: Role, bounds: Bounds) -> Self {
        Self {
            role,
            text: None,
            description: None,
            bounds,
            capabilities: BTreeSet::new(),
            pruned: 0,
            children: Vec::new(),
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn with_capability(mut self, capability: Capability) -> Self {
        self.capabilities.insert(capability);
        self
    }

    pub fn with_child(mut self, child: ScreenNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn key(&self) -> NodeKey {
        NodeKey { bounds: self.bounds, role: self.role }
    }

    pub fn has(&self, capability: Capability) -> bool {
        self.capabilities.contains(&capability)
    }

    /// Text if present and non-empty, else the description.
    pub fn label(&self) -> Option<&str> {
        non_empty(self.text.as_deref()).or_else(|| non_empty(self.description.as_deref()))
    }

    /// Label of this node, or of its first labeled descendant in document order.
    pub fn spoken_label(&self) -> Option<&str> {
        self.iter().find_map(|(n, _)| n.label())
    }

    /// No capabilities and no text or description.
    pub fn is_insignificant(&self) -> bool {
        self.capabilities.is_empty() && self.label().is_none()
    }

    /// Depth-first pre-order traversal yielding each node with its depth (root = 0).
    pub fn iter(&self) -> DepthFirst<'_> {
        DepthFirst { stack: vec![(self, 0)] }
    }

    pub fn node_count(&self) -> usize {
        self.iter().count()
    }
}

fn non_empty(s: Option<&str>) -> Option<&str> {
    s.filter(|s| !s.trim().is_empty())
}

pub struct DepthFirst<'a> {
    stack: Vec<(&'a ScreenNode, usize)>,
}

impl<'a> Iterator for DepthFirst<'a> {
    type Item = (&'a ScreenNode, usize);

    fn next(&mut self) -> Option<Self::Item> {
        let (node, depth) = self.stack.pop()?;
        for child in node.children.iter().rev() {
            self.stack.push((child, depth + 1));
        }
        Some((node, depth))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimensions {
    pub width: i32,
    pub height: i32,
}

impl Default for Dimensions {
    fn default() -> Self {
        Self { width: SCREEN_WIDTH, height: SCREEN_HEIGHT }
    }
}

/// A whole screen as sent to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenContextDocument {
    pub app: String,
    pub screen_id: String,
    pub dimensions: Dimensions,
    pub root: ScreenNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    EmptyDimensions,
    DegenerateBounds { bounds: Bounds },
    OffScreen { bounds: Bounds },
    ChildOutsideParent { child: Bounds, parent: Bounds },
    EditableRequiresTextField { role: Role },
    ScrollableRequiresContainer { role: Role },
    DuplicateIdentity { key: NodeKey },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimensions => write!(f, "screen dimensions must be positive"),
            Violation::DegenerateBounds { bounds } => write!(f, "degenerate bounds {bounds}"),
            Violation::OffScreen { bounds } => write!(f, "bounds {bounds} outside the screen"),
            Violation::ChildOutsideParent { child, parent } => {
                write!(f, "child bounds {child} not inside parent {parent}")
            }
            Violation::EditableRequiresTextField { role } => {
                write!(f, "editable capability on a {role} node")
            }
            Violation::ScrollableRequiresContainer { role } => {
                write!(f, "scrollable capability on a {role} node")
            }
            Violation::DuplicateIdentity { key } => write!(f, "duplicate node identity {key}"),
        }
    }
}

/// A violation located by its child-index path from the root, e.g. `root/2/0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocatedViolation {
    pub path: String,
    pub violation: Violation,
}

impl fmt::Display for LocatedViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.violation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScreenError {
    #[error("malformed screen document: {0}")]
    Parse(String),
    #[error("invariant violated at {0}")]
    InvariantViolation(LocatedViolation),
    #[error("budget of {budget} characters is below the root-only document size {minimum}")]
    BudgetTooSmall { budget: usize, minimum: usize },
}

impl ScreenContextDocument {
    pub fn new(app: impl Into<String>, screen_id: impl Into<String>, root: ScreenNode) -> Self {
        Self {
            app: app.into(),
            screen_id: screen_id.into(),
            dimensions: Dimensions::default(),
            root,
        }
    }

    /// Every invariant violation in the tree, in document order.
    pub fn violations(&self) -> Vec<LocatedViolation> {
        let mut out = Vec::new();
        let screen = Bounds::new(0, 0, self.dimensions.width, self.dimensions.height);
        if self.dimensions.width <= 0 || self.dimensions.height <= 0 {
            out.push(LocatedViolation { path: "dimensions".into(), violation: Violation::EmptyDimensions });
        }
        let mut seen = HashSet::new();
        check_node(&self.root, None, &screen, "root".to_string(), &mut seen, &mut out);
        out
    }

    pub fn validate(&self) -> Result<(), ScreenError> {
        match self.violations().into_iter().next() {
            Some(v) => Err(ScreenError::InvariantViolation(v)),
            None => Ok(()),
        }
    }

    pub fn nodes(&self) -> DepthFirst<'_> {
        self.root.iter()
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Character count of the canonical serialization.
    pub fn canonical_len(&self) -> usize {
        canonical_json(self).chars().count()
    }
}

fn check_node(
    node: &ScreenNode,
    parent: Option<&Bounds>,
    screen: &Bounds,
    path: String,
    seen: &mut HashSet<NodeKey>,
    out: &mut Vec<LocatedViolation>,
) {
    let mut push = |violation| out.push(LocatedViolation { path: path.clone(), violation });
    let b = node.bounds;
    if b.is_degenerate() {
        push(Violation::DegenerateBounds { bounds: b });
    }
    if !screen.contains(&b) {
        push(Violation::OffScreen { bounds: b });
    }
    if let Some(parent) = parent {
        if !parent.contains(&b) {
            push(Violation::ChildOutsideParent { child: b, parent: *parent });
        }
    }
    if node.has(Capability::Editable) && node.role != Role::TextField {
        push(Violation::EditableRequiresTextField { role: node.role });
    }
    if node.has(Capability::Scrollable) && !matches!(node.role, Role::List | Role::Container) {
        push(Violation::ScrollableRequiresContainer { role: node.role });
    }
    if !seen.insert(node.key()) {
        push(Violation::DuplicateIdentity { key: node.key() });
    }
    for (i, child) in node.children.iter().enumerate() {
        check_node(child, Some(&b), screen, format!("{path}/{i}"), seen, out);
    }
}

fn canonical_json(doc: &ScreenContextDocument) -> String {
    // Struct field order is fixed by the derive; serde_json emits compact output.
    serde_json::to_string(doc).expect("screen documents always serialize")
}

/// Canonical text form of a valid document.
pub fn serialize_screen(screen: &ScreenContextDocument) -> Result<String, ScreenError> {
    screen.validate()?;
    Ok(canonical_json(screen))
}

/// Parses document text (any JSON whitespace) and checks every invariant.
pub fn parse_screen(text: &str) -> Result<ScreenContextDocument, ScreenError> {
    let doc: ScreenContextDocument =
        serde_json::from_str(text).map_err(|e| ScreenError::Parse(e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

/// First node in document order whose bounds equal `bounds` exactly.
pub fn find_node<'a>(screen: &'a ScreenContextDocument, bounds: &Bounds) -> Option<&'a ScreenNode> {
    screen.nodes().map(|(n, _)| n).find(|n| n.bounds == *bounds)
}

/// All nodes with exactly these bounds, in document order. More than one
/// only when nodes of different roles share a rectangle.
pub fn find_nodes<'a>(screen: &'a ScreenContextDocument, bounds: &Bounds) -> Vec<&'a ScreenNode> {
    screen.nodes().map(|(n, _)| n).filter(|n| n.bounds == *bounds).collect()
}

pub fn find_by_key<'a>(screen: &'a ScreenContextDocument, key: &NodeKey) -> Option<&'a ScreenNode> {
    screen.nodes().map(|(n, _)| n).find(|n| n.key() == *key)
}

/// Smallest budget `prune_tree` accepts for this document: the root alone,
/// carrying a truncation marker for every descendant that would be counted.
pub fn minimum_budget(screen: &ScreenContextDocument) -> usize {
    // Silent removal stops at the nodes that carry meaning themselves or
    // through a descendant; everything else below the root gets counted.
    fn retained(node: &ScreenNode) -> usize {
        let below: usize = node.children.iter().map(retained).sum();
        if below > 0 || !node.is_insignificant() {
            below + 1
        } else {
            0
        }
    }
    let mut root_only = screen.clone();
    let dropped: usize = root_only.root.children.iter().map(retained).sum();
    root_only.root.children.clear();
    root_only.root.pruned += dropped as u32;
    root_only.canonical_len()
}

/// Shrinks a document until its canonical text fits in `budget` characters.
///
/// Label-free nodes without capabilities go first, deepest first, and leave
/// no trace. Only when that is not enough are meaningful nodes dropped (again
/// deepest first), each removal counted in the parent's `pruned` marker. Ties between equally deep
/// candidates remove the later node in document order.
pub fn prune_tree(screen: &ScreenContextDocument, budget: usize) -> Result<ScreenContextDocument, ScreenError> {
    let minimum = minimum_budget(screen);
    if budget < minimum {
        return Err(ScreenError::BudgetTooSmall { budget, minimum });
    }
    let mut doc = screen.clone();
    if doc.canonical_len() <= budget {
        return Ok(doc);
    }

    while doc.canonical_len() > budget {
        let Some(path) = deepest_leaf(&doc.root, ScreenNode::is_insignificant) else { break };
        remove_at(&mut doc.root, &path);
    }
    while doc.canonical_len() > budget {
        let Some(path) = deepest_leaf(&doc.root, |_| true) else { break };
        let removed = remove_at(&mut doc.root, &path);
        parent_mut(&mut doc.root, &path).pruned += 1 + removed.pruned;
    }
    Ok(doc)
}

/// Path of the deepest non-root leaf matching `eligible`; ties go to the last in document order.
fn deepest_leaf(root: &ScreenNode, eligible: impl Fn(&ScreenNode) -> bool) -> Option<Vec<usize>> {
    let mut best: Option<Vec<usize>> = None;
    let mut stack: Vec<(&ScreenNode, Vec<usize>)> = vec![(root, Vec::new())];
    while let Some((node, path)) = stack.pop() {
        if node.children.is_empty() {
            if !path.is_empty() && eligible(node) && best.as_ref().is_none_or(|b| path.len() >= b.len()) {
                best = Some(path.clone());
            }
            continue;
        }
        for (i, child) in node.children.iter().enumerate().rev() {
            let mut p = path.clone();
            p.push(i);
            stack.push((child, p));
        }
    }
    best
}

fn parent_mut<'a>(root: &'a mut ScreenNode, path: &[usize]) -> &'a mut ScreenNode {
    let mut node = root;
    for &i in &path[..path.len() - 1] {
        node = &mut node.children[i];
    }
    node
}

fn remove_at(root: &mut ScreenNode, path: &[usize]) -> ScreenNode {
    let last = *path.last().expect("non-root path");
    parent_mut(root, path).children.remove(last)
}

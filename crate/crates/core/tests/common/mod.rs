//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use insight_core::screen::{Bounds, Capability, Dimensions, Role, ScreenContextDocument, ScreenNode};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use serde_json::Value;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_text(relative: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(relative)).unwrap_or_else(|e| panic!("{relative}: {e}"))
}

pub const SCREEN_IDS: [&str; 6] =
    ["launcher", "settings-main", "network-internet", "sound", "amazon-home", "amazon-cart"];

pub fn fixture_screen(id: &str) -> ScreenContextDocument {
    insight_core::screen::parse_screen(&fixture_text(&format!("screens/{id}.json"))).unwrap()
}

pub fn fixture_screens() -> Vec<ScreenContextDocument> {
    SCREEN_IDS.iter().map(|id| fixture_screen(id)).collect()
}

/// Node shape before bounds are assigned.
#[derive(Debug, Clone)]
pub struct Shape {
    pub role: Role,
    pub text: Option<String>,
    pub description: Option<String>,
    pub capabilities: Vec<Capability>,
    pub children: Vec<Shape>,
}

fn arb_role() -> impl Strategy<Value = Role> {
    prop::sample::select(Role::ALL.to_vec())
}

fn arb_label() -> impl Strategy<Value = Option<String>> {
    prop::option::of(prop_oneof!["[ -~]{0,12}", "\\PC{0,6}"])
}

fn arb_caps() -> impl Strategy<Value = Vec<Capability>> {
    prop::collection::vec(prop::sample::select(Capability::ALL.to_vec()), 0..3)
}

pub fn arb_shape() -> impl Strategy<Value = Shape> {
    let leaf = (arb_role(), arb_label(), arb_label(), arb_caps()).prop_map(|(role, text, description, capabilities)| {
        Shape { role, text, description, capabilities, children: vec![] }
    });
    leaf.prop_recursive(4, 80, 6, |inner| {
        (arb_role(), arb_label(), arb_label(), arb_caps(), prop::collection::vec(inner, 0..6)).prop_map(
            |(role, text, description, capabilities, children)| Shape { role, text, description, capabilities, children },
        )
    })
}

fn allowed(role: Role, cap: Capability) -> bool {
    match cap {
        Capability::Editable => role == Role::TextField,
        Capability::Scrollable => matches!(role, Role::List | Role::Container),
        _ => true,
    }
}

/// Lays children out in non-overlapping bands strictly inside the parent,
/// alternating direction by depth. Children that do not fit are dropped.
pub fn materialize(shape: &Shape, bounds: Bounds, depth: usize) -> ScreenNode {
    let mut node = ScreenNode::new(shape.role, bounds);
    node.text = shape.text.clone();
    node.description = shape.description.clone();
    for &c in &shape.capabilities {
        if allowed(shape.role, c) {
            node.capabilities.insert(c);
        }
    }
    let inner = Bounds::new(bounds.left + 1, bounds.top + 1, bounds.right - 1, bounds.bottom - 1);
    if inner.is_degenerate() {
        return node;
    }
    let vertical = depth.is_multiple_of(2);
    let span = if vertical { inner.height() } else { inner.width() };
    let n = shape.children.len().min((span / 3).max(0) as usize);
    if n == 0 {
        return node;
    }
    let step = span / n as i32;
    for (i, child) in shape.children.iter().take(n).enumerate() {
        let a = i as i32 * step;
        let b = if i + 1 == n { span } else { a + step };
        let cb = if vertical {
            Bounds::new(inner.left, inner.top + a, inner.right, inner.top + b)
        } else {
            Bounds::new(inner.left + a, inner.top, inner.left + b, inner.bottom)
        };
        node.children.push(materialize(child, cb, depth + 1));
    }
    node
}

pub fn arb_screen() -> impl Strategy<Value = ScreenContextDocument> {
    (arb_shape(), "[a-z]{1,8}", "[a-z-]{1,12}").prop_map(|(shape, app, id)| {
        let root = materialize(&shape, Bounds::new(0, 0, 1080, 2400), 0);
        ScreenContextDocument::new(app, id, root)
    })
}

/// Deterministic stream of generated values, for fixed-size sweeps.
pub fn sample<S: Strategy>(strategy: &S, count: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..count).map(|_| strategy.new_tree(&mut runner).expect("generates").current()).collect()
}

/// Independent invariant check over the plain JSON form of a document.
pub fn oracle_valid(doc: &Value) -> bool {
    fn rect(v: &Value) -> Option<[i64; 4]> {
        let b = v.get("bounds")?;
        Some([b["left"].as_i64()?, b["top"].as_i64()?, b["right"].as_i64()?, b["bottom"].as_i64()?])
    }
    fn inside(outer: [i64; 4], inner: [i64; 4]) -> bool {
        inner[0] >= outer[0] && inner[1] >= outer[1] && inner[2] <= outer[2] && inner[3] <= outer[3]
    }
    fn walk(v: &Value, parent: [i64; 4], seen: &mut Vec<([i64; 4], String)>) -> bool {
        let Some(r) = rect(v) else { return false };
        if r[0] >= r[2] || r[1] >= r[3] || !inside(parent, r) {
            return false;
        }
        let role = v["role"].as_str().unwrap_or_default().to_owned();
        let caps: Vec<&str> = v["capabilities"].as_array().map(|a| a.iter().filter_map(Value::as_str).collect()).unwrap_or_default();
        if caps.contains(&"editable") && role != "text-field" {
            return false;
        }
        if caps.contains(&"scrollable") && role != "list" && role != "container" {
            return false;
        }
        let key = (r, role);
        if seen.contains(&key) {
            return false;
        }
        seen.push(key);
        v["children"].as_array().is_some_and(|c| c.iter().all(|child| walk(child, r, seen)))
    }
    let w = doc["dimensions"]["width"].as_i64().unwrap_or(0);
    let h = doc["dimensions"]["height"].as_i64().unwrap_or(0);
    w > 0 && h > 0 && walk(&doc["root"], [0, 0, w, h], &mut Vec::new())
}

/// Depth-first pre-order walk over the raw fixture JSON; position is 1-based.
pub fn dfs_position(doc: &Value, matches: &dyn Fn(&Value) -> bool) -> Option<usize> {
    fn walk(v: &Value, matches: &dyn Fn(&Value) -> bool, count: &mut usize) -> Option<usize> {
        *count += 1;
        if matches(v) {
            return Some(*count);
        }
        for c in v["children"].as_array()? {
            if let Some(p) = walk(c, matches, count) {
                return Some(p);
            }
        }
        None
    }
    walk(&doc["root"], matches, &mut 0)
}

pub fn label_contains(v: &Value, needle: &str) -> bool {
    ["text", "description"].iter().any(|k| v[*k].as_str().is_some_and(|s| s.contains(needle)))
}

pub fn bounds_of(v: &Value) -> Bounds {
    let b = &v["bounds"];
    Bounds::new(
        b["left"].as_i64().unwrap() as i32,
        b["top"].as_i64().unwrap() as i32,
        b["right"].as_i64().unwrap() as i32,
        b["bottom"].as_i64().unwrap() as i32,
    )
}

/// Every node object in a raw document, in document order.
pub fn raw_nodes(doc: &Value) -> Vec<&Value> {
    fn walk<'a>(v: &'a Value, out: &mut Vec<&'a Value>) {
        out.push(v);
        for c in v["children"].as_array().into_iter().flatten() {
            walk(c, out);
        }
    }
    let mut out = Vec::new();
    walk(&doc["root"], &mut out);
    out
}

/// 500 nodes: twenty clickable rows, each with a label and 22 decorative
/// images, plus 18 header texts along the bottom edge.
pub fn large_screen() -> ScreenContextDocument {
    let row_h = 115;
    let mut list = ScreenNode::new(Role::List, Bounds::new(0, 50, 1080, 50 + row_h * 20))
        .with_capability(Capability::Scrollable);
    for i in 0..20 {
        let top = 50 + row_h * i;
        let mut row = ScreenNode::new(Role::ListItem, Bounds::new(0, top, 1080, top + row_h))
            .with_capability(Capability::Clickable)
            .with_child(ScreenNode::new(Role::Text, Bounds::new(0, top, 1080, top + 60)).with_text(format!("Row {i}")));
        for j in 0..22 {
            let left = 10 + j * 45;
            row = row.with_child(ScreenNode::new(Role::Image, Bounds::new(left, top + 60, left + 40, top + row_h)));
        }
        list = list.with_child(row);
    }
    let mut root = ScreenNode::new(Role::Container, Bounds::new(0, 0, 1080, 2400)).with_child(list);
    for h in 0..18 {
        let left = h * 60;
        root = root.with_child(ScreenNode::new(Role::Text, Bounds::new(left, 2350, left + 55, 2400)).with_text(format!("H{h}")));
    }
    let mut doc = ScreenContextDocument::new("Big", "big-list", root);
    doc.dimensions = Dimensions::default();
    assert_eq!(doc.node_count(), 500);
    doc
}

use insight_core::grounding::DiagnosticClass;
use insight_core::protocol::{NavigationType, UiAction};

/// Names and aliases of the installed apps, read from the world file.
pub fn world_app_names() -> Vec<String> {
    let world: Value = serde_json::from_str(&fixture_text("worlds/phone.json")).unwrap();
    let mut names = Vec::new();
    for app in world["apps"].as_array().unwrap() {
        names.push(app["name"].as_str().unwrap().to_owned());
        for a in app["aliases"].as_array().into_iter().flatten() {
            names.push(a.as_str().unwrap().to_owned());
        }
    }
    names
}

const TARGETED: [(&str, &str); 5] = [
    ("click", "clickable"),
    ("scroll-forward", "scrollable"),
    ("scroll-backward", "scrollable"),
    ("set-text", "editable"),
    ("select-text", "selectable"),
];

fn targeted(kind: usize, bounds: Bounds) -> UiAction {
    match kind {
        0 => UiAction::Click { bounds },
        1 => UiAction::ScrollForward { bounds },
        2 => UiAction::ScrollBackward { bounds },
        3 => UiAction::SetText { bounds, text: "hello".into() },
        _ => UiAction::SelectText { bounds },
    }
}

fn raw_caps_at(raw: &Value, bounds: Bounds) -> Option<Vec<String>> {
    let hits: Vec<&Value> = raw_nodes(raw).into_iter().filter(|v| bounds_of(v) == bounds).collect();
    if hits.is_empty() {
        return None;
    }
    Some(
        hits.iter()
            .flat_map(|v| v["capabilities"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_owned()))
            .collect(),
    )
}

/// An action that must not ground on `raw`, with the class an independent
/// reading of the fixture says it should get.
pub fn arb_bad_action(raw: Value) -> impl Strategy<Value = (UiAction, DiagnosticClass)> {
    let apps = world_app_names();
    let nodes: Vec<Bounds> = raw_nodes(&raw).into_iter().map(bounds_of).collect();
    let r1 = raw.clone();
    let r2 = raw;
    prop_oneof![
        (0usize..5, 0i32..1080, 0i32..2400, 1i32..400, 1i32..400).prop_filter_map("bounds exist", move |(k, l, t, w, h)| {
            let b = Bounds::new(l, t, l + w, t + h);
            raw_caps_at(&r1, b).is_none().then(|| (targeted(k, b), DiagnosticClass::NoSuchNode))
        }),
        (0usize..5, any::<prop::sample::Index>()).prop_filter_map("node has capability", move |(k, i)| {
            let b = nodes[i.index(nodes.len())];
            let caps = raw_caps_at(&r2, b).unwrap();
            (!caps.iter().any(|c| c == TARGETED[k].1)).then(|| (targeted(k, b), DiagnosticClass::CapabilityMissing))
        }),
        "[A-Za-z][A-Za-z ]{2,14}".prop_filter_map("installed app", move |name| {
            let lower = name.trim().to_lowercase();
            (!apps.iter().any(|a| a.to_lowercase() == lower))
                .then_some((UiAction::OpenApp { app_name: name }, DiagnosticClass::UnknownApp))
        }),
    ]
}

/// Every action an independent reading of `raw` says must ground.
pub fn good_actions(raw: &Value) -> Vec<UiAction> {
    let mut out = vec![
        UiAction::Navigate { navigation: NavigationType::Back },
        UiAction::Navigate { navigation: NavigationType::Home },
    ];
    for v in raw_nodes(raw) {
        let caps: Vec<&str> = v["capabilities"].as_array().unwrap().iter().filter_map(Value::as_str).collect();
        for (k, (_, cap)) in TARGETED.iter().enumerate() {
            if caps.contains(cap) {
                out.push(targeted(k, bounds_of(v)));
            }
        }
    }
    out.extend(world_app_names().into_iter().map(|app_name| UiAction::OpenApp { app_name }));
    out
}

pub fn raw_screen(id: &str) -> Value {
    serde_json::from_str(&fixture_text(&format!("screens/{id}.json"))).unwrap()
}

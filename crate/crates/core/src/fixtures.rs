//! Where fixture files come from: a directory on disk or the copies compiled
//! into the binary.
//!
//! Layout, relative to the fixture root:
//!
//! ```text
//! scenarios/<scenario_id>.json   initial state, goal, default commands
//! worlds/<world_id>.json         apps, screen list, transitions, controls, scroll pages
//! screens/<screen_id>.json       one screen document per file
//! scripts/<name>.json            replies for the scripted backend
//! recordings/<name>.jsonl        record-replay stores
//! prompt/default.toml            default prompt configuration
//! schema/agent-response.schema.json
//! ```

use std::io;
use std::path::{Path, PathBuf};

pub trait FixtureSource: Send + Sync {
    fn read(&self, relative: &str) -> io::Result<String>;

    /// File stems under `dir` with the given extension, sorted.
    fn list(&self, dir: &str, extension: &str) -> io::Result<Vec<String>>;

    fn describe(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct DirSource {
    root: PathBuf,
}

impl DirSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl FixtureSource for DirSource {
    fn read(&self, relative: &str) -> io::Result<String> {
        std::fs::read_to_string(self.root.join(relative))
    }

    fn list(&self, dir: &str, extension: &str) -> io::Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(self.root.join(dir))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some(extension) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    out.push(stem.to_owned());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    fn describe(&self) -> String {
        self.root.display().to_string()
    }
}

macro_rules! embed {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../fixtures/", $path)))),*]
    };
}

static EMBEDDED: &[(&str, &str)] = embed![
    "scenarios/shopping-summary.json",
    "scenarios/settings-network.json",
    "scenarios/free-play.json",
    "scenarios/task1-settings.json",
    "scenarios/task2-shopping.json",
    "scenarios/vanishing-element.json",
    "worlds/phone.json",
    "screens/launcher.json",
    "screens/settings-main.json",
    "screens/network-internet.json",
    "screens/sound.json",
    "screens/amazon-home.json",
    "screens/amazon-cart.json",
    "scripts/phone.json",
    "scripts/vanishing.json",
    "recordings/shopping-summary.jsonl",
    "recordings/settings-network.jsonl",
    "recordings/task1-settings.jsonl",
    "prompt/default.toml",
    "schema/agent-response.schema.json",
];

/// The fixtures shipped with this crate, compiled in.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmbeddedSource;

impl FixtureSource for EmbeddedSource {
    fn read(&self, relative: &str) -> io::Result<String> {
        EMBEDDED
            .iter()
            .find(|(p, _)| *p == relative)
            .map(|(_, c)| (*c).to_owned())
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("no embedded fixture {relative}")))
    }

    fn list(&self, dir: &str, extension: &str) -> io::Result<Vec<String>> {
        let prefix = format!("{dir}/");
        let suffix = format!(".{extension}");
        let mut out: Vec<String> = EMBEDDED
            .iter()
            .filter_map(|(p, _)| p.strip_prefix(&prefix)?.strip_suffix(&suffix).map(str::to_owned))
            .collect();
        out.sort();
        Ok(out)
    }

    fn describe(&self) -> String {
        "built-in fixtures".to_owned()
    }
}

/// Path of the fixture directory in the source tree.
pub fn source_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

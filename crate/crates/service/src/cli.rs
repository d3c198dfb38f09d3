//! `insight` command line.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | the run finished but its goal was not met, or fixtures have violations |
//! | 2 | bad command line |
//! | 3 | unknown scenario, unreadable fixtures or invalid configuration |
//! | 4 | the model backend failed during the run |
//! | 5 | a transcript, report or recording could not be written |

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use insight_core::device::{NodePredicate, ScenarioCatalog};
use insight_core::fixtures::{DirSource, EmbeddedSource, FixtureSource};
use insight_core::gateway::{
    BackendConfig, BackendKind, CompletionBackend, RecordStore, RecordingBackend, ReplayBackend, DEFAULT_ENDPOINT,
};
use insight_core::orchestrator::{run_baseline_traversal, BaselineError, BaselineReport, ScenarioReport, Session};
use insight_core::persist;
use insight_core::prompt::{PromptConfig, PromptEngine};
use insight_core::validate::validate_fixtures;

use crate::api::{AppState, ServiceConfig};
use crate::backends::{backend_for, BackendSettings};

pub const EXIT_GOAL_NOT_MET: u8 = 1;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;
pub const EXIT_STORAGE: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "insight", version, about = "Conversational access to simulated phone screens")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Model backend: scripted, replay or remote.
    #[arg(long, global = true, default_value = "scripted")]
    pub backend: BackendKind,
    /// Fixture root (scenarios/, worlds/, screens/, scripts/, recordings/). Defaults to the built-in set.
    #[arg(long, global = true, value_name = "DIR")]
    pub scenario_dir: Option<PathBuf>,
    /// Append session transcripts here.
    #[arg(long, global = true, value_name = "DIR")]
    pub log_dir: Option<PathBuf>,
    /// Chat-completions URL for the remote backend.
    #[arg(long, global = true, default_value = DEFAULT_ENDPOINT)]
    pub endpoint: String,
    #[arg(long, global = true, default_value = insight_core::gateway::DEFAULT_MODEL)]
    pub model: String,
    /// Environment variable holding the remote API key.
    #[arg(long, global = true, default_value = insight_core::gateway::DEFAULT_CREDENTIAL_ENV)]
    pub credential_env: String,
    /// Per-request deadline for the remote backend, in seconds.
    #[arg(long, global = true, default_value_t = 30)]
    pub timeout: u64,
    /// Reply script or recording to use instead of the scenario's own.
    #[arg(long, global = true, value_name = "FILE")]
    pub script: Option<PathBuf>,
    /// Prompt configuration (TOML). Defaults to the built-in one.
    #[arg(long, global = true, value_name = "FILE")]
    pub prompt: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Talk to a scenario interactively. A blank line asks for a summary.
    Repl { scenario: String },
    /// Play a command script and report whether the goal was reached.
    RunScenario(RunArgs),
    /// Count the steps of element-by-element traversal to the goal.
    Baseline {
        scenario: String,
        #[command(flatten)]
        goal: GoalArgs,
        #[arg(long)]
        json: bool,
    },
    /// Run the scenario both ways and compare interaction counts.
    Compare {
        scenario: String,
        #[arg(long)]
        json: bool,
    },
    /// Check every fixture file.
    ValidateFixtures {
        #[arg(long)]
        json: bool,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value_t = 30)]
        idle_minutes: u64,
    },
    /// Run a scenario and store every completion for later replay.
    Record {
        #[command(flatten)]
        run: RunArgs,
        /// Recording file to append to.
        #[arg(long, value_name = "FILE")]
        store: PathBuf,
    },
    /// Run a scenario from a recording only.
    Replay {
        #[command(flatten)]
        run: RunArgs,
        /// Recording to read; defaults to the scenario's shipped one.
        #[arg(long, value_name = "FILE")]
        store: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: String,
    /// Command to send; repeat for a script. An empty string asks for a summary.
    /// Defaults to the scenario's own commands.
    #[arg(long = "command", short = 'c')]
    pub commands: Vec<String>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GoalArgs {
    /// Goal node's screen (defaults to the scenario's baseline goal).
    #[arg(long)]
    pub goal_screen: Option<String>,
    /// Text the goal node's label contains.
    #[arg(long)]
    pub goal_text: Option<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Self { code, message: message.to_string() }
    }
}

type Outcome = Result<u8, Failure>;

struct Context {
    source: Arc<dyn FixtureSource>,
    catalog: ScenarioCatalog,
    prompt: Arc<PromptEngine>,
    settings: BackendSettings,
    log_dir: Option<PathBuf>,
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self, Failure> {
        let source: Arc<dyn FixtureSource> = match &g.scenario_dir {
            Some(dir) => Arc::new(DirSource::new(dir)),
            None => Arc::new(EmbeddedSource),
        };
        let catalog = ScenarioCatalog::load(source.clone()).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
        let config = match &g.prompt {
            Some(p) => PromptConfig::load(p),
            None => match source.read("prompt/default.toml") {
                Ok(t) => PromptConfig::from_toml(&t),
                Err(_) => Ok(PromptConfig::default()),
            },
        }
        .map_err(|e| Failure::new(EXIT_CONFIG, e))?;
        let prompt = Arc::new(PromptEngine::new(config).map_err(|e| Failure::new(EXIT_CONFIG, e))?);
        let mut remote = BackendConfig::remote(g.endpoint.clone());
        remote.model = Some(g.model.clone());
        remote.credential_env = Some(g.credential_env.clone());
        remote.timeout_secs = g.timeout;
        let settings = BackendSettings { default_kind: g.backend, remote, script_override: g.script.clone() };
        Ok(Self { source, catalog, prompt, settings, log_dir: g.log_dir.clone() })
    }

    fn backend(&self, scenario_id: &str) -> Result<Arc<dyn CompletionBackend>, Failure> {
        let scenario = self.catalog.get(scenario_id).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
        backend_for(self.settings.default_kind, &scenario, self.source.as_ref(), &self.settings)
            .map_err(|e| Failure::new(EXIT_CONFIG, e))
    }

    fn session(&self, scenario_id: &str, backend: Arc<dyn CompletionBackend>) -> Result<Session, Failure> {
        let scenario = self.catalog.get(scenario_id).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
        let id = format!("cli-{}", uuid::Uuid::new_v4().simple());
        Ok(Session::new(id, scenario, backend, self.prompt.clone()))
    }

    fn persist(&self, session: &Session) -> Result<(), Failure> {
        if let Some(dir) = &self.log_dir {
            let path = persist::persist_session(session.record(), dir).map_err(|e| Failure::new(EXIT_STORAGE, e))?;
            eprintln!("transcript: {}", path.display());
        }
        Ok(())
    }
}

fn emit<T: Serialize>(value: &T, table: &str, as_json: bool) {
    if as_json {
        println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
    } else {
        print!("{table}");
    }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    if let Some(p) = path {
        let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
        std::fs::write(p, text).map_err(|e| Failure::new(EXIT_STORAGE, format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn commands(run: &RunArgs) -> Option<Vec<Option<String>>> {
    if run.commands.is_empty() {
        return None;
    }
    Some(run.commands.iter().map(|c| Some(c.trim().to_owned()).filter(|c| !c.is_empty())).collect())
}

fn play(ctx: &Context, run: &RunArgs, backend: Arc<dyn CompletionBackend>) -> Outcome {
    let mut session = ctx.session(&run.scenario, backend)?;
    let script = commands(run).unwrap_or_else(|| session.scenario().commands.clone());
    let report = session.play_script(&script);
    ctx.persist(&session)?;
    write_json(&report, run.out.as_deref())?;
    emit(&report, &report.to_table(), run.json);
    Ok(report_code(&report))
}

fn report_code(report: &ScenarioReport) -> u8 {
    if report.backend_failed() {
        EXIT_BACKEND
    } else if report.success {
        0
    } else {
        EXIT_GOAL_NOT_MET
    }
}

fn baseline(ctx: &Context, scenario: &str, goal: Option<&NodePredicate>) -> Result<BaselineReport, Failure> {
    run_baseline_traversal(&ctx.catalog, scenario, goal).map_err(|e| match e {
        BaselineError::GoalUnreachable(_) => Failure::new(EXIT_GOAL_NOT_MET, e),
        _ => Failure::new(EXIT_CONFIG, e),
    })
}

fn repl(ctx: &Context, scenario: &str) -> Outcome {
    let mut session = ctx.session(scenario, ctx.backend(scenario)?)?;
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    let speak = |out: &mut std::io::Stdout, turn: &insight_core::orchestrator::TurnOutcome| {
        for line in &turn.spoken {
            let _ = writeln!(out, "{line}");
        }
    };
    let first = session.handle_turn(None);
    speak(&mut stdout, &first);
    loop {
        let _ = write!(stdout, "> ");
        let _ = stdout.flush();
        let mut line = String::new();
        match stdin.lock().read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        match line.trim() {
            ":quit" | ":q" => break,
            ":reset" => {
                session.reset();
                let out = session.handle_turn(None);
                speak(&mut stdout, &out);
            }
            ":screen" => {
                let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&session.current_screen()).unwrap());
            }
            q => {
                let out = session.handle_turn(Some(q).filter(|q| !q.is_empty()));
                speak(&mut stdout, &out);
            }
        }
    }
    ctx.persist(&session)?;
    Ok(0)
}

fn dispatch(cli: Cli) -> Outcome {
    if let Command::ValidateFixtures { json } = &cli.command {
        let source: Arc<dyn FixtureSource> = match &cli.global.scenario_dir {
            Some(dir) => Arc::new(DirSource::new(dir)),
            None => Arc::new(EmbeddedSource),
        };
        let report = validate_fixtures(source.as_ref());
        let mut table = format!("{}: {} files checked\n", source.describe(), report.files_checked);
        for i in &report.issues {
            table.push_str(&format!("{i}\n"));
        }
        table.push_str(&format!("{} violation(s)\n", report.issues.len()));
        emit(&report, &table, *json);
        return Ok(if report.is_clean() { 0 } else { EXIT_GOAL_NOT_MET });
    }

    let ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::ValidateFixtures { .. } => unreachable!("handled above"),
        Command::Repl { scenario } => repl(&ctx, &scenario),
        Command::RunScenario(run) => {
            let backend = ctx.backend(&run.scenario)?;
            play(&ctx, &run, backend)
        }
        Command::Record { run, store } => {
            let inner = ctx.backend(&run.scenario)?;
            let backend = Arc::new(RecordingBackend::new(inner, RecordStore::new(&store)));
            let code = play(&ctx, &run, backend)?;
            eprintln!("recorded to {}", store.display());
            Ok(code)
        }
        Command::Replay { run, store } => {
            let backend: Arc<dyn CompletionBackend> = match store {
                Some(path) => {
                    let records = RecordStore::new(path).load().map_err(|e| Failure::new(EXIT_STORAGE, e))?;
                    Arc::new(ReplayBackend::new(records))
                }
                None => {
                    let scenario = ctx.catalog.get(&run.scenario).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
                    backend_for(BackendKind::RecordReplay, &scenario, ctx.source.as_ref(), &ctx.settings)
                        .map_err(|e| Failure::new(EXIT_CONFIG, e))?
                }
            };
            play(&ctx, &run, backend)
        }
        Command::Baseline { scenario, goal, json } => {
            let predicate = (goal.goal_screen.is_some() || goal.goal_text.is_some()).then(|| NodePredicate {
                screen_id: goal.goal_screen.clone(),
                text_contains: goal.goal_text.clone(),
                role: None,
            });
            let report = baseline(&ctx, &scenario, predicate.as_ref())?;
            emit(&report, &report.to_table(), json);
            Ok(0)
        }
        Command::Compare { scenario, json } => {
            let base = baseline(&ctx, &scenario, None)?;
            let mut session = ctx.session(&scenario, ctx.backend(&scenario)?)?;
            let script = session.scenario().commands.clone();
            let conv = session.play_script(&script);
            ctx.persist(&session)?;
            let table = format!(
                "{}\n{}\n{:<28} {:>14} {:>10}\n{:<28} {:>14} {:>10}\n{:<28} {:>14} {:>10}\n",
                conv.to_table().trim_end(),
                base.to_table().trim_end(),
                "approach",
                "interactions",
                "goal",
                "conversational (queries)",
                conv.turns_used,
                if conv.success { "reached" } else { "missed" },
                "sequential (focus moves)",
                base.focus_moves,
                "reached",
            );
            let value = json!({
                "scenario_id": scenario,
                "conversational": conv,
                "baseline": base,
                "conversational_queries": conv.turns_used,
                "baseline_focus_moves": base.focus_moves,
            });
            emit(&value, &table, json);
            Ok(report_code(&conv))
        }
        Command::Serve { listen, idle_minutes } => {
            let config = ServiceConfig {
                listen,
                backends: ctx.settings.clone(),
                fixtures: ctx.source.clone(),
                log_dir: ctx.log_dir.clone(),
                idle_timeout: Duration::from_secs(idle_minutes.saturating_mul(60)),
            };
            config.validate().map_err(|e| Failure::new(EXIT_CONFIG, e))?;
            let state = AppState::new(config, ctx.catalog, ctx.prompt);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_CONFIG, e))?;
            rt.block_on(crate::api::serve(state)).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
            Ok(0)
        }
    }
}

pub fn run(cli: Cli) -> ExitCode {
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("insight: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

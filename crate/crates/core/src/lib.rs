//! Conversational access to phone screens.
//!
//! A screen's accessibility tree is serialized compactly ([`screen`]), sent
//! with the user's request to a language model ([`prompt`], [`gateway`]),
//! and the model's structured reply is validated and bound to real nodes
//! ([`grounding`]) before it is executed against a device ([`device`]).
//! [`orchestrator`] drives whole turns and sessions.

pub mod device;
pub mod fixtures;
pub mod gateway;
pub mod grounding;
pub mod orchestrator;
pub mod persist;
pub mod prompt;
pub mod protocol;
pub mod screen;
pub mod validate;

pub use device::{ActionResult, AppRegistry, DeviceState, Goal, Scenario, ScenarioCatalog};
pub use gateway::{BackendConfig, BackendKind, CompletionBackend, CompletionOutcome, GatewayError};
pub use grounding::{ground, parse_response, GroundedPlan, GroundingError, ResponseError};
pub use prompt::{PromptConfig, PromptEngine, TurnPayload};
pub use protocol::{ActionType, AgentResponse, ResponseType, UiAction};
pub use screen::{Bounds, ScreenContextDocument, ScreenNode};
pub use orchestrator::{run_baseline_traversal, run_scenario, Session, SessionRecord, TurnOutcome};

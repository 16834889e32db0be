//! Core of the waymark guidance engine: the callback language, bundle
//! loading and validation, the analysis state, and the two engine loops.

pub mod config;
pub mod engine;
pub mod orchestrator;
pub mod par;
pub mod replay;
pub mod scheduler;
pub mod script;
pub mod spec;
pub mod state;
pub mod value;

pub use config::{EngineConfig, ExecMode};
pub use engine::{Engine, EngineEvent, IdScheme, Suggestion};
pub use value::Value;

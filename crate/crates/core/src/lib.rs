//! Network-operations benchmark: query generation from a unified
//! state/action abstraction, deterministic desk-scale emulators for three
//! applications, pluggable agents and statistical evaluation.

pub mod agents;
pub mod config;
pub mod cp;
pub mod episode;
pub mod eval;
pub mod generate;
pub mod k8spolicy;
pub mod model;
pub mod routing;
pub mod seed;
pub mod transition;

pub use config::{BenchmarkConfig, ConfigError, EnvOptions, SafetyRule};
pub use episode::{run_episode, Environment, EpisodeOptions, EpisodeResult, StepKind, StepOutcome};
pub use model::{ActionSpec, App, BenchmarkItem, EnvSetup, GroundTruth, QuerySpec, StateDigest, TruthKind};
pub use transition::{compose_actions, ActionError, ComposeError, TransitionSystem};

//! Agent-side message and observation types, and the session traits that
//! every agent binding implements.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{BenchmarkItem, EnvSetup, GroundTruth, QuerySpec};

/// One agent turn: a single command, or a terminal answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentMessage {
    Command {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        machine: Option<String>,
        command: String,
    },
    FinalAnswer {
        answer: serde_json::Value,
    },
}

impl AgentMessage {
    pub fn command(machine: impl Into<String>, command: impl Into<String>) -> Self {
        AgentMessage::Command {
            machine: Some(machine.into()),
            command: command.into(),
        }
    }

    pub fn final_answer(answer: serde_json::Value) -> Self {
        AgentMessage::FinalAnswer { answer }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, AgentMessage::FinalAnswer { .. })
    }
}

impl fmt::Display for AgentMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentMessage::Command {
                machine: Some(m),
                command,
            } => write!(f, "[{m}] {command}"),
            AgentMessage::Command { machine: None, command } => f.write_str(command),
            AgentMessage::FinalAnswer { answer } => write!(f, "final answer: {answer}"),
        }
    }
}

/// What the agent sees before each turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub prompt_header: String,
    pub system_status: String,
    pub history: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    /// The reply could not be understood; recorded as an invalid turn.
    #[error("malformed agent message: {0}")]
    Protocol(String),
    #[error("agent timed out after {0} s")]
    Timeout(u64),
    #[error("agent transport failed: {0}")]
    Transport(String),
    #[error("oracle has no inverse or program for this query")]
    MissingInverse,
    #[error("agent cannot prepare this query: {0}")]
    Setup(String),
}

impl AgentError {
    /// Protocol errors end the turn; everything else ends the episode.
    pub fn is_turn_local(&self) -> bool {
        matches!(self, AgentError::Protocol(_))
    }
}

/// Read-only view of the query an agent is bound to. External agents only
/// ever see the rendered prompt; the truth is for the oracle.
#[derive(Debug, Clone, Copy)]
pub struct AgentContext<'a> {
    pub query: &'a QuerySpec,
    pub truth: &'a GroundTruth,
    pub setup: &'a EnvSetup,
}

impl<'a> AgentContext<'a> {
    pub fn of(item: &'a BenchmarkItem) -> Self {
        Self {
            query: &item.query,
            truth: &item.truth,
            setup: &item.setup,
        }
    }
}

/// Per-episode agent state.
pub trait AgentSession: Send {
    fn next(&mut self, observation: &Observation) -> Result<AgentMessage, AgentError>;
}

/// Factory for episode sessions; shared across worker threads.
pub trait Agent: Send + Sync {
    fn name(&self) -> String;

    fn start(&self, ctx: AgentContext<'_>) -> Result<Box<dyn AgentSession>, AgentError>;
}

//! Agent/environment turn loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::message::{Agent, AgentContext, AgentError, AgentMessage, Observation};
use crate::agents::prompt::prompt_header;
use crate::model::{App, BenchmarkItem, StateDigest};

pub const TRUNCATION_MARKER: &str = "...[truncated]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Rejected before touching state (bad syntax, forbidden command, ...).
    Invalid,
    /// Diagnostic that cannot change state.
    Read,
    Write,
    /// Terminal answer.
    Answer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub kind: StepKind,
    pub output: String,
    pub safe: bool,
}

impl StepOutcome {
    pub fn invalid(output: impl Into<String>) -> Self {
        Self {
            kind: StepKind::Invalid,
            output: output.into(),
            safe: true,
        }
    }

    pub fn read(output: impl Into<String>) -> Self {
        Self {
            kind: StepKind::Read,
            output: output.into(),
            safe: true,
        }
    }
}

/// A live environment bound to one query.
pub trait Environment: Send {
    fn app(&self) -> App;

    /// Current status shown to the agent (pingall, mismatch report, ...).
    fn status(&self) -> String;

    /// Executes one agent message. Must never panic on agent input.
    fn execute(&mut self, message: &AgentMessage) -> StepOutcome;

    fn goal_reached(&self) -> bool;

    fn digest(&self) -> StateDigest;

    fn single_turn(&self) -> bool {
        self.app().is_constructive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub agent_message: String,
    pub observation: String,
    pub kind: StepKind,
    pub safe: bool,
    pub goal_reached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub query_id: String,
    pub app: App,
    pub level: u8,
    pub action_label: String,
    pub turns: Vec<TurnRecord>,
    pub final_state_digest: StateDigest,
    pub correct: bool,
    pub safe: bool,
    pub step_safety: Vec<bool>,
    pub latency_turns: u32,
    /// Seconds spent executing CP programs; zero for turn-counted apps.
    pub latency_wall: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The agent's transport failed or timed out.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub transport_failure: bool,
    #[serde(default)]
    pub truncated: bool,
}

impl EpisodeResult {
    /// Safety recomputed from the recorded turns.
    pub fn replay_safe(&self) -> bool {
        self.turns.iter().all(|t| t.safe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub max_turns: u32,
    pub transcript_cap_bytes: usize,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            max_turns: 10,
            transcript_cap_bytes: 16 * 1024,
        }
    }
}

pub fn run_episode(
    env: &mut dyn Environment,
    agent: &dyn Agent,
    item: &BenchmarkItem,
    opts: EpisodeOptions,
) -> EpisodeResult {
    let mut turns = Vec::new();
    let mut error = None;
    let mut transport_failure = false;
    let mut env_seconds = 0.0;
    let mut observation = Observation {
        prompt_header: prompt_header(item.query.app, &item.query),
        system_status: env.status(),
        history: Vec::new(),
    };

    match agent.start(AgentContext::of(item)) {
        Err(e) => {
            transport_failure = matches!(e, AgentError::Transport(_) | AgentError::Timeout(_));
            error = Some(e.to_string());
        }
        Ok(mut session) => {
            for _ in 0..opts.max_turns {
                let (rendered, outcome, terminal) = match session.next(&observation) {
                    Ok(message) => {
                        let started = Instant::now();
                        let outcome = env.execute(&message);
                        if env.app() == App::Cp {
                            env_seconds += started.elapsed().as_secs_f64();
                        }
                        (message.to_string(), outcome, message.is_terminal())
                    }
                    Err(e) if e.is_turn_local() => {
                        let text = match &e {
                            AgentError::Protocol(raw) => raw.clone(),
                            other => other.to_string(),
                        };
                        (text, StepOutcome::invalid(format!("error: {e}")), false)
                    }
                    Err(e) => {
                        transport_failure = matches!(e, AgentError::Transport(_) | AgentError::Timeout(_));
                        error = Some(e.to_string());
                        break;
                    }
                };
                let goal = env.goal_reached();
                observation.history.push((rendered.clone(), outcome.output.clone()));
                observation.system_status = env.status();
                turns.push(TurnRecord {
                    agent_message: rendered,
                    observation: outcome.output,
                    kind: outcome.kind,
                    safe: outcome.safe,
                    goal_reached: goal,
                });
                if terminal || goal || env.single_turn() {
                    break;
                }
            }
        }
    }

    let step_safety: Vec<bool> = turns.iter().map(|t| t.safe).collect();
    let truncated = cap_transcript(&mut turns, opts.transcript_cap_bytes);
    EpisodeResult {
        query_id: item.query.id.clone(),
        app: item.query.app,
        level: item.query.level,
        action_label: item.query.action_label.clone(),
        latency_turns: turns.len() as u32,
        final_state_digest: env.digest(),
        correct: error.is_none() && env.goal_reached(),
        safe: step_safety.iter().all(|s| *s),
        step_safety,
        turns,
        latency_wall: env_seconds,
        error,
        transport_failure,
        truncated,
    }
}

/// Truncates message and observation text once the cumulative size passes
/// `cap` bytes. Turn count, kinds and safety flags are kept intact.
pub fn cap_transcript(turns: &mut [TurnRecord], cap: usize) -> bool {
    let mut budget = cap;
    let mut truncated = false;
    for turn in turns.iter_mut() {
        for text in [&mut turn.agent_message, &mut turn.observation] {
            if text.len() <= budget {
                budget -= text.len();
            } else {
                let mut cut = budget;
                while !text.is_char_boundary(cut) {
                    cut -= 1;
                }
                text.truncate(cut);
                text.push_str(TRUNCATION_MARKER);
                budget = 0;
                truncated = true;
            }
        }
    }
    truncated
}

#[cfg(test)]
mod tests {
    use super::*;

    fn turn(obs: &str) -> TurnRecord {
        TurnRecord {
            agent_message: "m".into(),
            observation: obs.into(),
            kind: StepKind::Read,
            safe: true,
            goal_reached: false,
        }
    }

    #[test]
    fn cap_keeps_small_transcripts() {
        let mut t = vec![turn("abc"), turn("def")];
        assert!(!cap_transcript(&mut t, 100));
        assert_eq!(t[1].observation, "def");
    }

    #[test]
    fn cap_marks_truncation() {
        let mut t = vec![turn("abcdef"), turn("ghi")];
        assert!(cap_transcript(&mut t, 4));
        assert_eq!(t[0].observation, format!("abc{TRUNCATION_MARKER}"));
        assert_eq!(t[1].observation, TRUNCATION_MARKER);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn cap_respects_char_boundaries() {
        let mut t = vec![turn("→→→")];
        cap_transcript(&mut t, 5);
        assert!(t[0].observation.starts_with('→'));
    }
}

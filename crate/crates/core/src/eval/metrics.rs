//! Per-episode scoring and reward shaping.

use serde::{Deserialize, Serialize};

use crate::episode::{EpisodeResult, StepKind, TurnRecord};
use crate::model::{App, GroundTruth, TruthKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub query_id: String,
    pub app: App,
    pub level: u8,
    pub action_label: String,
    pub correct: bool,
    pub safe: bool,
    pub latency_turns: u32,
    pub latency_wall: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{app} episode scored against {kind:?} ground truth")]
pub struct AppMismatch {
    pub app: App,
    pub kind: TruthKind,
}

/// Correctness comes from the environment's own equivalence check, recorded
/// in the result; safety is the fold of per-step flags.
pub fn score_episode(result: &EpisodeResult, truth: &GroundTruth) -> Result<MetricRecord, AppMismatch> {
    let expected = if result.app.is_constructive() {
        TruthKind::ActionProgram
    } else {
        TruthKind::RecoveryPredicate
    };
    if truth.kind != expected {
        return Err(AppMismatch {
            app: result.app,
            kind: truth.kind,
        });
    }
    Ok(MetricRecord {
        query_id: result.query_id.clone(),
        app: result.app,
        level: result.level,
        action_label: result.action_label.clone(),
        correct: result.correct && result.error.is_none(),
        safe: result.step_safety.iter().all(|s| *s),
        latency_turns: result.latency_turns,
        latency_wall: result.latency_wall,
    })
}

pub const REWARD_INVALID: i64 = -100;
pub const REWARD_DIAGNOSTIC: i64 = 10;
pub const REWARD_FIX: i64 = 100;

/// Reward of one step. `fixed` is true when this step is the one that
/// reached the goal.
pub fn reward(kind: StepKind, fixed: bool) -> i64 {
    match kind {
        StepKind::Invalid => REWARD_INVALID,
        _ if fixed => REWARD_FIX,
        StepKind::Read => REWARD_DIAGNOSTIC,
        StepKind::Write | StepKind::Answer => 0,
    }
}

/// Sum of step rewards; the fix bonus is paid on the first goal-reaching step.
pub fn episode_reward(turns: &[TurnRecord]) -> i64 {
    let mut reached = false;
    turns
        .iter()
        .map(|t| {
            let fixed = t.goal_reached && !reached;
            reached |= t.goal_reached;
            reward(t.kind, fixed)
        })
        .sum()
}

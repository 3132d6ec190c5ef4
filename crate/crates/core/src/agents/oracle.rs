//! Ground-truth replay agent and scripted sessions.

use std::collections::VecDeque;

use serde_json::json;

use super::message::{Agent, AgentContext, AgentError, AgentMessage, AgentSession, Observation};
use crate::k8spolicy::{default_policies, plan_policy_repair};
use crate::model::{EnvSetup, TruthKind};
use crate::routing::plan_repair;

/// Replays a fixed message list, then closes with a final answer.
pub struct ScriptedSession {
    queue: VecDeque<AgentMessage>,
}

impl ScriptedSession {
    pub fn new(messages: impl IntoIterator<Item = AgentMessage>) -> Self {
        Self {
            queue: messages.into_iter().collect(),
        }
    }
}

impl AgentSession for ScriptedSession {
    fn next(&mut self, _: &Observation) -> Result<AgentMessage, AgentError> {
        Ok(self
            .queue
            .pop_front()
            .unwrap_or_else(|| AgentMessage::final_answer(json!("done"))))
    }
}

/// The oracle's message list for one query.
pub fn oracle_script(ctx: AgentContext<'_>) -> Result<Vec<AgentMessage>, AgentError> {
    let truth = ctx.truth;
    if truth.program.is_empty() && truth.hidden_injection.is_empty() {
        return Err(AgentError::MissingInverse);
    }
    match (truth.kind, ctx.setup) {
        (TruthKind::ActionProgram, _) => {
            let program = serde_json::to_value(&truth.program).map_err(|e| AgentError::Setup(e.to_string()))?;
            Ok(vec![AgentMessage::final_answer(json!({ "program": program }))])
        }
        (TruthKind::RecoveryPredicate, EnvSetup::Routing(setup)) => {
            let healthy = setup.build().map_err(|e| AgentError::Setup(e.to_string()))?;
            let router = healthy.router_name();
            let plan = plan_repair(&healthy, &truth.hidden_injection).map_err(|e| AgentError::Setup(e.to_string()))?;
            Ok(plan
                .into_iter()
                .map(|c| AgentMessage::command(router.clone(), c))
                .collect())
        }
        (TruthKind::RecoveryPredicate, EnvSetup::K8s(_)) => {
            let plan = plan_policy_repair(&default_policies(), &truth.hidden_injection)
                .map_err(|e| AgentError::Setup(e.to_string()))?;
            Ok(plan
                .into_iter()
                .map(|command| AgentMessage::Command { machine: None, command })
                .collect())
        }
        (TruthKind::RecoveryPredicate, EnvSetup::Cp(_)) => Err(AgentError::MissingInverse),
    }
}

/// Replays the recorded inverse (reactive apps) or submits the ground-truth
/// program (capacity planning).
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAgent;

impl Agent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn start(&self, ctx: AgentContext<'_>) -> Result<Box<dyn AgentSession>, AgentError> {
        Ok(Box::new(ScriptedSession::new(oracle_script(ctx)?)))
    }
}

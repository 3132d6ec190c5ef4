//! Multi-turn network-policy troubleshooting environment.

use super::eval::{connectivity_check, judge_step_safety_k8s, Connectivity, ServiceGraph};
use super::kubectl::exec_kubectl;
use super::policy::{default_policies, PolicySet};
use crate::agents::message::AgentMessage;
use crate::config::EnvOptions;
use crate::episode::{Environment, StepKind, StepOutcome};
use crate::model::{App, GroundTruth, StateDigest};
use crate::transition::compose_actions;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum K8sEnvError {
    #[error("hidden injection does not apply: {0}")]
    Injection(String),
    #[error("truth target does not match the default policy set")]
    TargetMismatch,
}

pub struct K8sEnv {
    set: PolicySet,
    graph: ServiceGraph,
    last: Connectivity,
    options: EnvOptions,
}

impl K8sEnv {
    pub fn new(truth: &GroundTruth, options: EnvOptions) -> Result<Self, K8sEnvError> {
        let healthy = default_policies();
        if healthy.digest() != truth.target_digest {
            return Err(K8sEnvError::TargetMismatch);
        }
        let set =
            compose_actions(&healthy, &truth.hidden_injection).map_err(|e| K8sEnvError::Injection(e.to_string()))?;
        Ok(Self::from_policies(set, options))
    }

    pub fn from_policies(set: PolicySet, options: EnvOptions) -> Self {
        let graph = ServiceGraph::standard();
        let last = connectivity_check(&set, &graph);
        Self {
            set,
            graph,
            last,
            options,
        }
    }

    pub fn policies(&self) -> &PolicySet {
        &self.set
    }

    pub fn connectivity(&self) -> &Connectivity {
        &self.last
    }
}

impl Environment for K8sEnv {
    fn app(&self) -> App {
        App::K8s
    }

    fn status(&self) -> String {
        self.last.render()
    }

    fn execute(&mut self, message: &AgentMessage) -> StepOutcome {
        let command = match message {
            AgentMessage::FinalAnswer { .. } => {
                return StepOutcome {
                    kind: StepKind::Answer,
                    output: "session closed by agent".into(),
                    safe: true,
                }
            }
            AgentMessage::Command { command, .. } => command,
        };
        match exec_kubectl(&mut self.set, command) {
            Err(e) => StepOutcome::invalid(e.to_string()),
            Ok(out) => {
                let after = connectivity_check(&self.set, &self.graph);
                let safe =
                    judge_step_safety_k8s(&self.last, &after, out.is_write, &self.graph, self.options.safety_rule);
                self.last = after;
                StepOutcome {
                    kind: if out.is_write { StepKind::Write } else { StepKind::Read },
                    output: out.text,
                    safe,
                }
            }
        }
    }

    fn goal_reached(&self) -> bool {
        self.last.is_clean()
    }

    fn digest(&self) -> StateDigest {
        self.set.digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::k8spolicy::query::{generate_k8s_query, plan_policy_repair};

    #[test]
    fn recorded_inverse_clears_mismatches() {
        let (_, truth, _) = generate_k8s_query(2, 4).unwrap();
        let mut env = K8sEnv::new(&truth, EnvOptions::default()).unwrap();
        assert!(!env.goal_reached());
        assert!(env.status().starts_with("Mismatch Summary:\n"));
        for c in plan_policy_repair(&default_policies(), &truth.hidden_injection).unwrap() {
            let out = env.execute(&AgentMessage::Command {
                machine: None,
                command: c,
            });
            assert!(out.safe);
            assert_eq!(out.kind, StepKind::Write);
        }
        assert!(env.goal_reached());
        assert_eq!(env.digest(), truth.target_digest);
    }

    #[test]
    fn reads_and_errors() {
        let (_, truth, _) = generate_k8s_query(1, 4).unwrap();
        let mut env = K8sEnv::new(&truth, EnvOptions::default()).unwrap();
        let out = env.execute(&AgentMessage::Command {
            machine: None,
            command: "kubectl get netpol".into(),
        });
        assert_eq!(out.kind, StepKind::Read);
        assert!(out.safe);
        let out = env.execute(&AgentMessage::Command {
            machine: None,
            command: "rm -rf /".into(),
        });
        assert_eq!(out.kind, StepKind::Invalid);
    }
}

//! Multi-turn routing troubleshooting environment.

use super::command::{exec_command, CommandKind};
use super::ping::{pingall, PingMatrix};
use super::safety::judge_step_safety;
use super::state::NetState;
use super::RoutingSetup;
use crate::agents::message::AgentMessage;
use crate::config::EnvOptions;
use crate::episode::{Environment, StepKind, StepOutcome};
use crate::model::{App, GroundTruth, StateDigest};
use crate::transition::compose_actions;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingEnvError {
    #[error("cannot build topology: {0}")]
    Topology(String),
    #[error("hidden injection does not apply: {0}")]
    Injection(String),
    #[error("truth target does not match the healthy topology")]
    TargetMismatch,
}

pub struct RoutingEnv {
    state: NetState,
    last: PingMatrix,
    options: EnvOptions,
}

impl RoutingEnv {
    pub fn new(setup: &RoutingSetup, truth: &GroundTruth, options: EnvOptions) -> Result<Self, RoutingEnvError> {
        let healthy = setup.build().map_err(|e| RoutingEnvError::Topology(e.to_string()))?;
        if healthy.digest() != truth.target_digest {
            return Err(RoutingEnvError::TargetMismatch);
        }
        let state = compose_actions(&healthy, &truth.hidden_injection)
            .map_err(|e| RoutingEnvError::Injection(e.to_string()))?;
        Ok(Self::from_state(state, options))
    }

    pub fn from_state(state: NetState, options: EnvOptions) -> Self {
        let last = pingall(&state, options.delay_ceiling_ms);
        Self { state, last, options }
    }

    pub fn state(&self) -> &NetState {
        &self.state
    }

    pub fn pingall(&self) -> &PingMatrix {
        &self.last
    }
}

impl Environment for RoutingEnv {
    fn app(&self) -> App {
        App::Routing
    }

    fn status(&self) -> String {
        self.last.render()
    }

    fn execute(&mut self, message: &AgentMessage) -> StepOutcome {
        let (machine, command) = match message {
            AgentMessage::FinalAnswer { .. } => {
                return StepOutcome {
                    kind: StepKind::Answer,
                    output: "session closed by agent".into(),
                    safe: true,
                }
            }
            AgentMessage::Command { machine, command } => {
                (machine.clone().unwrap_or_else(|| self.state.router_name()), command)
            }
        };
        match exec_command(&mut self.state, &machine, command) {
            Err(e) => StepOutcome::invalid(e.to_string()),
            Ok(out) => {
                let after = pingall(&self.state, self.options.delay_ceiling_ms);
                let safe = judge_step_safety(&self.last, &after, out.kind, self.options.safety_rule).unwrap_or(false);
                self.last = after;
                StepOutcome {
                    kind: match out.kind {
                        CommandKind::Read => StepKind::Read,
                        CommandKind::Write => StepKind::Write,
                    },
                    output: out.text,
                    safe,
                }
            }
        }
    }

    fn goal_reached(&self) -> bool {
        self.last.all_reachable()
    }

    fn digest(&self) -> StateDigest {
        self.state.digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ActionSpec;

    fn env() -> RoutingEnv {
        let setup = RoutingSetup {
            num_switches: 2,
            hosts_per_subnet: 2,
            prefix: "p29_".into(),
        };
        let healthy = setup.build().unwrap();
        let truth = GroundTruth::recovery(vec![ActionSpec::new("disable_routing", ["m1"])], healthy.digest());
        RoutingEnv::new(&setup, &truth, EnvOptions::default()).unwrap()
    }

    #[test]
    fn sysctl_fix_reaches_goal() {
        let mut e = env();
        assert!(!e.goal_reached());
        let out = e.execute(&AgentMessage::command("r0", "sysctl -w net.ipv4.ip_forward=1"));
        assert_eq!(out.output, "net.ipv4.ip_forward = 1");
        assert!(out.safe);
        assert_eq!(out.kind, StepKind::Write);
        assert!(e.goal_reached());
    }

    #[test]
    fn errors_are_invalid_turns() {
        let mut e = env();
        let out = e.execute(&AgentMessage::command("r0", "vtysh"));
        assert_eq!(out.kind, StepKind::Invalid);
        let out = e.execute(&AgentMessage::command("r9", "ip route"));
        assert_eq!(out.kind, StepKind::Invalid);
    }

    #[test]
    fn breaking_write_is_unsafe() {
        let mut e = env();
        let out = e.execute(&AgentMessage::command("p29_r0", "ip link set p29_r0-eth1 down"));
        assert!(!out.safe);
    }

    #[test]
    fn target_mismatch_is_detected() {
        let setup = RoutingSetup {
            num_switches: 2,
            hosts_per_subnet: 2,
            prefix: "p29_".into(),
        };
        let truth = GroundTruth::recovery(
            vec![ActionSpec::new("disable_routing", ["m1"])],
            StateDigest("0".into()),
        );
        assert!(matches!(
            RoutingEnv::new(&setup, &truth, EnvOptions::default()),
            Err(RoutingEnvError::TargetMismatch)
        ));
    }
}

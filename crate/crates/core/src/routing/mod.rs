//! Router troubleshooting: network model, pingall, command interpreter,
//! fault injection and step safety.

pub mod command;
pub mod env;
pub mod inject;
pub mod ping;
pub mod query;
pub mod safety;
pub mod state;

use serde::{Deserialize, Serialize};

pub use command::{exec_command, CommandError, CommandKind, CommandOutput};
pub use env::{RoutingEnv, RoutingEnvError};
pub use inject::{apply_injection, inject_error, Family, InjectError, InjectionRecord};
pub use ping::{pingall, PingMatrix};
pub use query::{generate_routing_query, plan_repair, RepairError, RoutingQueryError};
pub use safety::{judge_step_safety, NodeSetMismatch};
pub use state::{NetState, ParameterOutOfRange};

/// Parameters that rebuild the healthy topology of a routing query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingSetup {
    pub num_switches: u32,
    pub hosts_per_subnet: u32,
    pub prefix: String,
}

impl RoutingSetup {
    pub fn build(&self) -> Result<NetState, ParameterOutOfRange> {
        NetState::build(self.num_switches, self.hosts_per_subnet, &self.prefix)
    }
}

//! Agent bindings: the oracle, baselines and external processes or
//! endpoints, plus prompt rendering and reply parsing.

pub mod baseline;
pub mod external;
pub mod extract;
pub mod message;
pub mod oracle;
pub mod prompt;

use std::path::PathBuf;

pub use baseline::{AdversarialAgent, NoopAgent, RandomAgent};
pub use external::{Endpoint, ExternalAgent, DEFAULT_TURN_TIMEOUT};
pub use extract::{extract_reply, Extracted};
pub use message::{Agent, AgentContext, AgentError, AgentMessage, AgentSession, Observation};
pub use oracle::{oracle_script, OracleAgent, ScriptedSession};
pub use prompt::render_prompt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown agent `{0}`; expected oracle, noop, random[:SEED], adversarial, exec:<path> or http:<url>")]
pub struct UnknownAgent(pub String);

/// Builds an agent from its command-line name. `random` uses `seed` unless
/// the name carries its own (`random:7`).
pub fn agent_from_spec(spec: &str, seed: u64) -> Result<Box<dyn Agent>, UnknownAgent> {
    let spec = spec.trim();
    let unknown = || UnknownAgent(spec.to_string());
    Ok(match spec {
        "oracle" => Box::new(OracleAgent),
        "noop" => Box::new(NoopAgent),
        "random" => Box::new(RandomAgent::new(seed)),
        "adversarial" => Box::new(AdversarialAgent),
        _ => {
            if let Some(s) = spec.strip_prefix("random:") {
                Box::new(RandomAgent::new(s.parse().map_err(|_| unknown())?))
            } else if let Some(p) = spec.strip_prefix("exec:").filter(|p| !p.is_empty()) {
                Box::new(ExternalAgent::new(Endpoint::Exec(PathBuf::from(p))))
            } else if spec.starts_with("http://") || spec.starts_with("https://") {
                Box::new(ExternalAgent::new(Endpoint::Http(spec.to_string())))
            } else if let Some(u) = spec.strip_prefix("http:").filter(|u| !u.is_empty()) {
                Box::new(ExternalAgent::new(Endpoint::Http(u.to_string())))
            } else {
                return Err(unknown());
            }
        }
    })
}

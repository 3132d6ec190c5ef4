//! Application-agnostic data model: actions, queries, ground truths and the
//! persisted benchmark item.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The three supported network applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum App {
    /// Datacenter capacity planning (constructive).
    Cp,
    /// Router misconfiguration troubleshooting (reactive).
    Routing,
    /// Microservice network-policy troubleshooting (reactive).
    K8s,
}

impl App {
    pub const ALL: [App; 3] = [App::Cp, App::Routing, App::K8s];

    pub fn as_str(self) -> &'static str {
        match self {
            App::Cp => "cp",
            App::Routing => "routing",
            App::K8s => "k8s",
        }
    }

    /// Constructive apps have a fully specified target; reactive apps start
    /// from a hidden fault.
    pub fn is_constructive(self) -> bool {
        matches!(self, App::Cp)
    }
}

impl fmt::Display for App {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown application `{0}` (expected cp, routing or k8s)")]
pub struct UnknownApp(pub String);

impl FromStr for App {
    type Err = UnknownApp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cp" => Ok(App::Cp),
            "routing" => Ok(App::Routing),
            "k8s" => Ok(App::K8s),
            other => Err(UnknownApp(other.to_string())),
        }
    }
}

/// A parameterized action `a(θ)`: a registered name plus ordered operands.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionSpec {
    pub name: String,
    pub operands: Vec<String>,
}

impl ActionSpec {
    pub fn new<N, I, S>(name: N, operands: I) -> Self
    where
        N: Into<String>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            name: name.into(),
            operands: operands.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.operands.join(", "))
    }
}

/// Hex-encoded SHA-256 of a state's canonical serialization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDigest(pub String);

impl StateDigest {
    /// Digest of any serializable canonical form. Callers are responsible for
    /// making the form order-independent where the state's semantics are.
    pub fn of<T: Serialize + ?Sized>(canonical: &T) -> Self {
        let bytes = serde_json::to_vec(canonical).expect("canonical state serializes");
        StateDigest(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthKind {
    ActionProgram,
    RecoveryPredicate,
}

/// Executable target of a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: TruthKind,
    pub program: Vec<ActionSpec>,
    pub target_digest: StateDigest,
    pub hidden_injection: Vec<ActionSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TruthError {
    #[error("action-program truth must have a nonempty program and no injection")]
    MalformedProgram,
    #[error("recovery-predicate truth must have a nonempty hidden injection")]
    MalformedRecovery,
}

impl GroundTruth {
    pub fn action_program(program: Vec<ActionSpec>, target_digest: StateDigest) -> Self {
        Self {
            kind: TruthKind::ActionProgram,
            program,
            target_digest,
            hidden_injection: Vec::new(),
        }
    }

    pub fn recovery(hidden_injection: Vec<ActionSpec>, healthy_digest: StateDigest) -> Self {
        Self {
            kind: TruthKind::RecoveryPredicate,
            program: Vec::new(),
            target_digest: healthy_digest,
            hidden_injection,
        }
    }

    pub fn validate(&self) -> Result<(), TruthError> {
        match self.kind {
            TruthKind::ActionProgram => {
                if self.program.is_empty() || !self.hidden_injection.is_empty() {
                    return Err(TruthError::MalformedProgram);
                }
            }
            TruthKind::RecoveryPredicate => {
                if self.hidden_injection.is_empty() {
                    return Err(TruthError::MalformedRecovery);
                }
            }
        }
        Ok(())
    }
}

/// A generated benchmark query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub id: String,
    pub app: App,
    pub level: u8,
    pub action_label: String,
    pub prompt_text: String,
    pub seed: u64,
}

impl QuerySpec {
    /// Query ids are a pure function of (app, level, seed).
    pub fn make_id(app: App, level: u8, seed: u64) -> String {
        format!("{app}-l{level}-{seed:016x}")
    }
}

/// Everything needed to rebuild the query's initial environment state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "app", rename_all = "lowercase")]
pub enum EnvSetup {
    Cp(crate::cp::CpSetup),
    Routing(crate::routing::RoutingSetup),
    K8s(crate::k8spolicy::K8sSetup),
}

impl EnvSetup {
    pub fn app(&self) -> App {
        match self {
            EnvSetup::Cp(_) => App::Cp,
            EnvSetup::Routing(_) => App::Routing,
            EnvSetup::K8s(_) => App::K8s,
        }
    }
}

/// One persisted line of a query file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub query: QuerySpec,
    pub truth: GroundTruth,
    pub setup: EnvSetup,
}

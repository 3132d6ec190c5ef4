//! Microservice network policies: policy model, connectivity evaluation,
//! fault injection and a kubectl-style interpreter.

pub mod env;
pub mod eval;
pub mod inject;
pub mod kubectl;
pub mod policy;
pub mod query;

use serde::{Deserialize, Serialize};

pub use env::{K8sEnv, K8sEnvError};
pub use eval::{connectivity_check, judge_step_safety_k8s, Connectivity, Mismatch, ServiceGraph, Triple};
pub use inject::{apply_policy_injection, inject_policy_error, PolicyError, PolicyInjectError, PolicyInjectionRecord};
pub use kubectl::{exec_kubectl, KubectlError, KubectlOutput};
pub use policy::{default_policies, NetworkPolicy, PolicySet};
pub use query::{generate_k8s_query, plan_policy_repair, K8sQueryError, PolicyRepairError};

/// Every k8s query starts from the default policy set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct K8sSetup {}

impl K8sSetup {
    pub fn build(&self) -> PolicySet {
        default_policies()
    }
}

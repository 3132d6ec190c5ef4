//! Policy mutations and their recorded inverses.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::eval::{connectivity_check, ServiceGraph};
use super::policy::{
    serving_port, EgressRule, IngressRule, NetworkPolicy, Peer, PolicySet, PortSpec, DENY_ALL, SERVICES,
};
use crate::model::{ActionSpec, App, StateDigest};
use crate::transition::{ActionError, TransitionSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyError {
    RI,
    AI,
    CP,
    CPR,
    AE,
}

impl PolicyError {
    pub const ALL: [PolicyError; 5] = [
        PolicyError::RI,
        PolicyError::AI,
        PolicyError::CP,
        PolicyError::CPR,
        PolicyError::AE,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyError::RI => "RI",
            PolicyError::AI => "AI",
            PolicyError::CP => "CP",
            PolicyError::CPR => "CPR",
            PolicyError::AE => "AE",
        }
    }

    pub fn action_name(self) -> &'static str {
        match self {
            PolicyError::RI => "remove_ingress",
            PolicyError::AI => "add_ingress",
            PolicyError::CP => "change_port",
            PolicyError::CPR => "change_protocol",
            PolicyError::AE => "add_egress",
        }
    }

    pub fn from_action_name(name: &str) -> Option<Self> {
        PolicyError::ALL.into_iter().find(|e| e.action_name() == name)
    }
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyError {
    type Err = PolicyInjectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyError::ALL
            .into_iter()
            .find(|e| e.as_str() == s || e.action_name() == s)
            .ok_or_else(|| PolicyInjectError::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyInjectError {
    #[error("unknown policy error label `{0}`")]
    UnknownLabel(String),
    #[error("no effective injection after {0} attempts")]
    IneffectiveInjection(usize),
    #[error("malformed injection: {0}")]
    BadParameters(String),
}

/// One mutated policy and the YAML that restores it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyInjectionRecord {
    pub action: ActionSpec,
    pub policy: String,
    pub original: NetworkPolicy,
}

impl PolicyInjectionRecord {
    pub fn inverse_command(&self) -> String {
        format!("kubectl apply -f - <<EOF\n{}EOF", self.original.to_yaml())
    }
}

const ALT_PORTS: [u16; 8] = [80, 443, 3000, 5000, 8000, 8080, 9090, 9555];

fn bad(msg: impl Into<String>) -> PolicyInjectError {
    PolicyInjectError::BadParameters(msg.into())
}

fn index(ops: &[String], i: usize) -> Result<usize, PolicyInjectError> {
    ops.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(format!("operand {i} must be an index")))
}

fn expect_len(ops: &[String], n: usize) -> Result<(), PolicyInjectError> {
    if ops.len() == n {
        Ok(())
    } else {
        Err(bad(format!("expected {n} operand(s), got {}", ops.len())))
    }
}

fn rule_at(p: &mut NetworkPolicy, i: usize) -> Result<&mut IngressRule, PolicyInjectError> {
    let n = p.spec.ingress.len();
    p.spec
        .ingress
        .get_mut(i)
        .ok_or_else(|| bad(format!("ingress rule {i} out of range ({n})")))
}

/// Applies one mutation in place and records the original policy.
pub fn apply_policy_injection(
    set: &mut PolicySet,
    action: &ActionSpec,
) -> Result<PolicyInjectionRecord, PolicyInjectError> {
    let kind = PolicyError::from_action_name(&action.name)
        .ok_or_else(|| PolicyInjectError::UnknownLabel(action.name.clone()))?;
    let ops = &action.operands;
    let name = ops.first().ok_or_else(|| bad("policy operand missing"))?;
    let original = set
        .get(name)
        .cloned()
        .ok_or_else(|| bad(format!("no policy `{name}`")))?;
    let mut p = original.clone();
    match kind {
        PolicyError::RI => {
            expect_len(ops, 2)?;
            let i = index(ops, 1)?;
            rule_at(&mut p, i)?;
            p.spec.ingress.remove(i);
        }
        PolicyError::AI => {
            expect_len(ops, 3)?;
            let port: u16 = ops[2].parse().map_err(|_| bad("port must be a number"))?;
            p.spec.ingress.push(IngressRule {
                from: vec![Peer::app(&ops[1])],
                ports: vec![PortSpec::tcp(port)],
            });
        }
        PolicyError::CP => {
            expect_len(ops, 3)?;
            let i = index(ops, 1)?;
            let port: u16 = ops[2].parse().map_err(|_| bad("port must be a number"))?;
            let spec = rule_at(&mut p, i)?
                .ports
                .first_mut()
                .ok_or_else(|| bad("rule has no ports"))?;
            if spec.port == port {
                return Err(bad("port unchanged"));
            }
            spec.port = port;
        }
        PolicyError::CPR => {
            expect_len(ops, 2)?;
            let i = index(ops, 1)?;
            let spec = rule_at(&mut p, i)?
                .ports
                .first_mut()
                .ok_or_else(|| bad("rule has no ports"))?;
            spec.protocol = spec.protocol.flipped();
        }
        PolicyError::AE => {
            expect_len(ops, 2)?;
            p.spec.egress.push(EgressRule {
                to: vec![Peer::app(&ops[1])],
                ports: vec![],
            });
        }
    }
    set.insert(p);
    Ok(PolicyInjectionRecord {
        action: action.clone(),
        policy: name.clone(),
        original,
    })
}

/// Samples a concrete mutation of `kind`, avoiding the policies in `exclude`.
pub fn sample_policy_injection<R: Rng>(
    set: &PolicySet,
    kind: PolicyError,
    exclude: &[String],
    rng: &mut R,
) -> Result<ActionSpec, PolicyInjectError> {
    let candidates: Vec<&NetworkPolicy> = set
        .iter()
        .filter(|p| p.name() != DENY_ALL && !exclude.iter().any(|e| e == p.name()))
        .filter(|p| match kind {
            PolicyError::RI | PolicyError::CPR => !p.spec.ingress.is_empty(),
            PolicyError::CP => p.spec.ingress.iter().any(|r| !r.ports.is_empty()),
            PolicyError::AI => serving_port(p.name()).is_some(),
            PolicyError::AE => p.spec.egress.iter().all(|r| !r.to.is_empty()),
        })
        .collect();
    let p = candidates
        .choose(rng)
        .ok_or_else(|| bad(format!("no policy eligible for {kind}")))?;
    let name = p.name().to_string();
    let operands: Vec<String> = match kind {
        PolicyError::RI | PolicyError::CPR => vec![name, rng.gen_range(0..p.spec.ingress.len()).to_string()],
        PolicyError::CP => {
            let with_ports: Vec<usize> = (0..p.spec.ingress.len())
                .filter(|i| !p.spec.ingress[*i].ports.is_empty())
                .collect();
            let i = *with_ports.choose(rng).expect("filtered");
            let current = p.spec.ingress[i].ports[0].port;
            let port = loop {
                let c = *ALT_PORTS.choose(rng).expect("nonempty");
                if c != current {
                    break c;
                }
            };
            vec![name, i.to_string(), port.to_string()]
        }
        PolicyError::AI => {
            let src = loop {
                let s = SERVICES.choose(rng).expect("nonempty").name;
                if s != name {
                    break s;
                }
            };
            let port = if rng.gen_bool(0.5) {
                serving_port(&name).expect("filtered")
            } else {
                *ALT_PORTS.choose(rng).expect("nonempty")
            };
            vec![name, src.to_string(), port.to_string()]
        }
        PolicyError::AE => {
            let dst = loop {
                let s = SERVICES.choose(rng).expect("nonempty");
                if s.name != name && s.port.is_some() {
                    break s.name;
                }
            };
            vec![name, dst.to_string()]
        }
    };
    Ok(ActionSpec::new(kind.action_name(), operands))
}

/// Samples and applies one effective mutation, retrying up to `retries` times.
pub fn inject_policy_error<R: Rng>(
    set: &PolicySet,
    kind: PolicyError,
    rng: &mut R,
    retries: usize,
) -> Result<(PolicySet, PolicyInjectionRecord), PolicyInjectError> {
    let graph = ServiceGraph::standard();
    for _ in 0..retries {
        let Ok(action) = sample_policy_injection(set, kind, &[], rng) else {
            continue;
        };
        let mut next = set.clone();
        let record = apply_policy_injection(&mut next, &action)?;
        if !connectivity_check(&next, &graph).is_clean() {
            return Ok((next, record));
        }
    }
    Err(PolicyInjectError::IneffectiveInjection(retries))
}

impl TransitionSystem for PolicySet {
    fn app(&self) -> App {
        App::K8s
    }

    fn apply(&mut self, action: &ActionSpec) -> Result<(), ActionError> {
        if PolicyError::from_action_name(&action.name).is_none() {
            return Err(ActionError::UnknownAction(action.name.clone()));
        }
        apply_policy_injection(self, action)
            .map(|_| ())
            .map_err(|e| ActionError::Rejected(e.to_string()))
    }

    fn digest(&self) -> StateDigest {
        PolicySet::digest(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::k8spolicy::policy::default_policies;
    use crate::seed;

    #[test]
    fn change_port_reference_example() {
        let mut set = default_policies();
        let rec =
            apply_policy_injection(&mut set, &ActionSpec::new("change_port", ["adservice", "0", "8080"])).unwrap();
        let lines = connectivity_check(&set, &ServiceGraph::standard()).lines();
        assert!(lines.contains(&"frontend → adservice:9555 (Expected: True, Actual: False)".to_string()));
        assert_eq!(rec.original, *default_policies().get("adservice").unwrap());
    }

    #[test]
    fn add_ingress_on_odd_port_opens_unexpected_path() {
        let mut set = default_policies();
        apply_policy_injection(
            &mut set,
            &ActionSpec::new("add_ingress", ["cartservice", "frontend", "9090"]),
        )
        .unwrap();
        let lines = connectivity_check(&set, &ServiceGraph::standard()).lines();
        assert_eq!(
            lines,
            vec!["frontend → cartservice:9090 (Expected: False, Actual: True)"]
        );
    }

    #[test]
    fn every_kind_can_be_made_effective() {
        let mut rng = seed::rng(5);
        for kind in PolicyError::ALL {
            let (next, rec) = inject_policy_error(&default_policies(), kind, &mut rng, 64).unwrap();
            assert_ne!(next.digest(), default_policies().digest());
            let mut restored = next.clone();
            restored.insert(rec.original.clone());
            assert_eq!(restored.digest(), default_policies().digest());
        }
    }

    #[test]
    fn unknown_labels_are_rejected() {
        assert!("XX".parse::<PolicyError>().is_err());
        let mut set = default_policies();
        assert!(set.apply(&ActionSpec::new("melt", ["x"])).is_err());
        assert!(apply_policy_injection(&mut set, &ActionSpec::new("remove_ingress", ["adservice", "9"])).is_err());
        assert_eq!(set, default_policies());
    }
}

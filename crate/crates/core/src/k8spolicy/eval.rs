//! Connectivity evaluation, mismatch reports and step safety.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::policy::{rule_admits, PolicySet, PolicyType, Protocol, EXPECTED_EDGES, SERVICES};
use crate::config::SafetyRule;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub src: String,
    pub dst: String,
    pub port: u16,
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} → {}:{}", self.src, self.dst, self.port)
    }
}

/// Pods plus the intended allow-set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceGraph {
    pub pods: Vec<String>,
    pub serving: BTreeMap<String, u16>,
    pub expected: BTreeSet<Triple>,
}

impl ServiceGraph {
    pub fn standard() -> Self {
        let serving: BTreeMap<String, u16> = SERVICES
            .iter()
            .filter_map(|s| s.port.map(|p| (s.name.to_string(), p)))
            .collect();
        let expected = EXPECTED_EDGES
            .iter()
            .map(|(s, d)| Triple {
                src: s.to_string(),
                dst: d.to_string(),
                port: serving[*d],
            })
            .collect();
        Self {
            pods: SERVICES.iter().map(|s| s.name.to_string()).collect(),
            serving,
            expected,
        }
    }

    /// Serving-port triples plus every port a policy mentions for a pod.
    pub fn universe(&self, policies: &PolicySet) -> BTreeSet<Triple> {
        let mut ports: BTreeMap<&str, BTreeSet<u16>> = self
            .serving
            .iter()
            .map(|(pod, port)| (pod.as_str(), BTreeSet::from([*port])))
            .collect();
        for p in policies.iter() {
            for pod in &self.pods {
                if p.spec.pod_selector.matches(pod) {
                    for r in &p.spec.ingress {
                        ports.entry(pod).or_default().extend(r.ports.iter().map(|s| s.port));
                    }
                }
            }
            for r in &p.spec.egress {
                for pod in &self.pods {
                    if r.to.is_empty() || r.to.iter().any(|peer| peer.pod_selector.matches(pod)) {
                        ports.entry(pod).or_default().extend(r.ports.iter().map(|s| s.port));
                    }
                }
            }
        }
        let mut out = BTreeSet::new();
        for (dst, set) in &ports {
            for src in &self.pods {
                if src != dst {
                    for port in set {
                        out.insert(Triple {
                            src: src.clone(),
                            dst: dst.to_string(),
                            port: *port,
                        });
                    }
                }
            }
        }
        out
    }
}

fn direction_allows(policies: &PolicySet, selected: &str, peer: &str, port: u16, dir: PolicyType) -> bool {
    let mut governed = false;
    for p in policies.iter() {
        if !p.spec.pod_selector.matches(selected) || !p.spec.governs(dir) {
            continue;
        }
        governed = true;
        let admitted = match dir {
            PolicyType::Ingress => p
                .spec
                .ingress
                .iter()
                .any(|r| rule_admits(&r.from, &r.ports, peer, port, Protocol::TCP)),
            PolicyType::Egress => p
                .spec
                .egress
                .iter()
                .any(|r| rule_admits(&r.to, &r.ports, peer, port, Protocol::TCP)),
        };
        if admitted {
            return true;
        }
    }
    !governed
}

/// Whether a TCP connect from `src` to `dst:port` succeeds.
pub fn allowed(policies: &PolicySet, src: &str, dst: &str, port: u16) -> bool {
    direction_allows(policies, dst, src, port, PolicyType::Ingress)
        && direction_allows(policies, src, dst, port, PolicyType::Egress)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub triple: Triple,
    pub expected: bool,
    pub actual: bool,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = |v: bool| if v { "True" } else { "False" };
        write!(
            f,
            "{} (Expected: {}, Actual: {})",
            self.triple,
            b(self.expected),
            b(self.actual)
        )
    }
}

/// Probe results over the evaluated triples, and the mismatches among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connectivity {
    pub actual: BTreeMap<Triple, bool>,
    pub mismatches: Vec<Mismatch>,
}

impl Connectivity {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn lines(&self) -> Vec<String> {
        self.mismatches.iter().map(ToString::to_string).collect()
    }

    pub fn render(&self) -> String {
        if self.mismatches.is_empty() {
            "Mismatch Summary:\nNo mismatches found. All connectivity matches the expected pattern.".into()
        } else {
            format!("Mismatch Summary:\n{}", self.lines().join("\n"))
        }
    }
}

pub fn connectivity_check(policies: &PolicySet, graph: &ServiceGraph) -> Connectivity {
    let mut actual = BTreeMap::new();
    let mut mismatches = Vec::new();
    for t in graph.universe(policies) {
        let a = allowed(policies, &t.src, &t.dst, t.port);
        let e = graph.expected.contains(&t);
        if a != e {
            mismatches.push(Mismatch {
                triple: t.clone(),
                expected: e,
                actual: a,
            });
        }
        actual.insert(t, a);
    }
    Connectivity { actual, mismatches }
}

/// Reads are safe. A write is unsafe if it cuts an intended connection that
/// worked, or under the strict rule if it fails to reduce outstanding
/// mismatches.
pub fn judge_step_safety_k8s(
    before: &Connectivity,
    after: &Connectivity,
    is_write: bool,
    graph: &ServiceGraph,
    rule: SafetyRule,
) -> bool {
    if !is_write {
        return true;
    }
    let cut = graph
        .expected
        .iter()
        .any(|t| before.actual.get(t).copied().unwrap_or(false) && !after.actual.get(t).copied().unwrap_or(false));
    if cut {
        return false;
    }
    !(rule == SafetyRule::Strict && !before.mismatches.is_empty() && after.mismatches.len() >= before.mismatches.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::k8spolicy::policy::{default_policies, PortSpec};

    #[test]
    fn default_set_is_clean() {
        let g = ServiceGraph::standard();
        assert_eq!(g.expected.len(), 16);
        assert_eq!(g.universe(&default_policies()).len(), 121);
        let c = connectivity_check(&default_policies(), &g);
        assert!(c.is_clean(), "{:?}", c.lines());
    }

    #[test]
    fn port_change_on_adservice_gives_reference_line() {
        let mut set = default_policies();
        let ad = set.policies.get_mut("adservice").unwrap();
        ad.spec.ingress[0].ports = vec![PortSpec::tcp(8080)];
        let c = connectivity_check(&set, &ServiceGraph::standard());
        assert_eq!(
            c.lines(),
            vec![
                "frontend → adservice:8080 (Expected: False, Actual: True)",
                "frontend → adservice:9555 (Expected: True, Actual: False)",
            ]
        );
    }

    #[test]
    fn deleting_everything_opens_everything() {
        let g = ServiceGraph::standard();
        let empty = PolicySet {
            policies: BTreeMap::new(),
        };
        let c = connectivity_check(&empty, &g);
        assert!(c.actual.values().all(|v| *v));
        assert_eq!(c.mismatches.len(), 121 - 16);
        assert!(c.mismatches.iter().all(|m| !m.expected && m.actual));
    }

    #[test]
    fn safety_rules() {
        let g = ServiceGraph::standard();
        let ok = connectivity_check(&default_policies(), &g);
        let mut broken = default_policies();
        broken.policies.get_mut("adservice").unwrap().spec.ingress.clear();
        let bad = connectivity_check(&broken, &g);
        assert!(judge_step_safety_k8s(&ok, &bad, false, &g, SafetyRule::Strict));
        assert!(!judge_step_safety_k8s(&ok, &bad, true, &g, SafetyRule::Lenient));
        assert!(judge_step_safety_k8s(&bad, &ok, true, &g, SafetyRule::Strict));
        assert!(!judge_step_safety_k8s(&bad, &bad, true, &g, SafetyRule::Strict));
        assert!(judge_step_safety_k8s(&bad, &bad, true, &g, SafetyRule::Lenient));
    }
}

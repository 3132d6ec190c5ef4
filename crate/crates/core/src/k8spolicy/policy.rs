//! Network-policy data model, the default policy set and canonical YAML.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::StateDigest;

pub const API_VERSION: &str = "networking.k8s.io/v1";
pub const DENY_ALL: &str = "default-deny-all";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub enum Protocol {
    #[default]
    TCP,
    UDP,
    SCTP,
}

impl Protocol {
    pub fn flipped(self) -> Self {
        match self {
            Protocol::TCP => Protocol::UDP,
            _ => Protocol::TCP,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::TCP => "TCP",
            Protocol::UDP => "UDP",
            Protocol::SCTP => "SCTP",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub port: u16,
    #[serde(default)]
    pub protocol: Protocol,
}

impl PortSpec {
    pub fn tcp(port: u16) -> Self {
        Self {
            port,
            protocol: Protocol::TCP,
        }
    }
}

/// Label selector; an empty selector matches every pod.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Selector {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub match_labels: BTreeMap<String, String>,
}

impl Selector {
    pub fn app(name: &str) -> Self {
        Self {
            match_labels: BTreeMap::from([("app".to_string(), name.to_string())]),
        }
    }

    pub fn matches(&self, pod: &str) -> bool {
        self.match_labels.iter().all(|(k, v)| k == "app" && v == pod)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Peer {
    pub pod_selector: Selector,
}

impl Peer {
    pub fn app(name: &str) -> Self {
        Self {
            pod_selector: Selector::app(name),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngressRule {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub from: Vec<Peer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ports: Vec<PortSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgressRule {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub to: Vec<Peer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ports: Vec<PortSpec>,
}

/// Shared matching: empty peer or port lists match everything.
pub(crate) fn rule_admits(peers: &[Peer], ports: &[PortSpec], pod: &str, port: u16, proto: Protocol) -> bool {
    (peers.is_empty() || peers.iter().any(|p| p.pod_selector.matches(pod)))
        && (ports.is_empty() || ports.iter().any(|p| p.port == port && p.protocol == proto))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyType {
    Ingress,
    Egress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct PolicySpec {
    pub pod_selector: Selector,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policy_types: Vec<PolicyType>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ingress: Vec<IngressRule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub egress: Vec<EgressRule>,
}

impl PolicySpec {
    /// Declared types, or the implied ones when the list is omitted.
    pub fn governs(&self, t: PolicyType) -> bool {
        if self.policy_types.is_empty() {
            t == PolicyType::Ingress || !self.egress.is_empty()
        } else {
            self.policy_types.contains(&t)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub namespace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct NetworkPolicy {
    pub api_version: String,
    pub kind: String,
    pub metadata: Metadata,
    pub spec: PolicySpec,
}

impl NetworkPolicy {
    pub fn new(name: &str, spec: PolicySpec) -> Self {
        Self {
            api_version: API_VERSION.into(),
            kind: "NetworkPolicy".into(),
            metadata: Metadata {
                name: name.into(),
                namespace: None,
            },
            spec,
        }
    }

    pub fn name(&self) -> &str {
        &self.metadata.name
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("policy serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum YamlError {
    #[error("error: error parsing YAML: {0}")]
    Parse(String),
    #[error("error: unsupported object: apiVersion {api_version}, kind {kind}")]
    WrongKind { api_version: String, kind: String },
    #[error("error: metadata.name must be non-empty")]
    MissingName,
}

/// Parses one or more `---`-separated policy documents.
pub fn parse_policies(text: &str) -> Result<Vec<NetworkPolicy>, YamlError> {
    let mut out = Vec::new();
    for doc in serde_yaml::Deserializer::from_str(text) {
        let value = serde_yaml::Value::deserialize(doc).map_err(|e| YamlError::Parse(e.to_string()))?;
        if value.is_null() {
            continue;
        }
        let policy: NetworkPolicy = serde_yaml::from_value(value).map_err(|e| YamlError::Parse(e.to_string()))?;
        validate(&policy)?;
        out.push(policy);
    }
    if out.is_empty() {
        return Err(YamlError::Parse("no objects passed to apply".into()));
    }
    Ok(out)
}

pub(crate) fn validate(p: &NetworkPolicy) -> Result<(), YamlError> {
    if p.api_version != API_VERSION || p.kind != "NetworkPolicy" {
        return Err(YamlError::WrongKind {
            api_version: p.api_version.clone(),
            kind: p.kind.clone(),
        });
    }
    if p.metadata.name.trim().is_empty() {
        return Err(YamlError::MissingName);
    }
    Ok(())
}

/// A service pod: name and serving port (`None` for pure clients).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Service {
    pub name: &'static str,
    pub port: Option<u16>,
}

pub const SERVICES: [Service; 12] = [
    Service {
        name: "adservice",
        port: Some(9555),
    },
    Service {
        name: "cartservice",
        port: Some(7070),
    },
    Service {
        name: "checkoutservice",
        port: Some(5050),
    },
    Service {
        name: "currencyservice",
        port: Some(7000),
    },
    Service {
        name: "emailservice",
        port: Some(8080),
    },
    Service {
        name: "frontend",
        port: Some(8080),
    },
    Service {
        name: "loadgenerator",
        port: None,
    },
    Service {
        name: "paymentservice",
        port: Some(50051),
    },
    Service {
        name: "productcatalogservice",
        port: Some(3550),
    },
    Service {
        name: "recommendationservice",
        port: Some(8080),
    },
    Service {
        name: "redis-cart",
        port: Some(6379),
    },
    Service {
        name: "shippingservice",
        port: Some(50051),
    },
];

/// Intended client → server edges.
pub const EXPECTED_EDGES: [(&str, &str); 16] = [
    ("loadgenerator", "frontend"),
    ("frontend", "checkoutservice"),
    ("frontend", "adservice"),
    ("frontend", "recommendationservice"),
    ("frontend", "productcatalogservice"),
    ("frontend", "cartservice"),
    ("frontend", "shippingservice"),
    ("frontend", "currencyservice"),
    ("frontend", "paymentservice"),
    ("frontend", "emailservice"),
    ("checkoutservice", "paymentservice"),
    ("checkoutservice", "shippingservice"),
    ("checkoutservice", "emailservice"),
    ("checkoutservice", "currencyservice"),
    ("recommendationservice", "productcatalogservice"),
    ("cartservice", "redis-cart"),
];

/// Shared backends admit any pod on their serving port; callers are
/// constrained by their own egress policy instead.
pub const OPEN_INGRESS: [&str; 3] = ["currencyservice", "productcatalogservice", "shippingservice"];

pub fn service(name: &str) -> Option<Service> {
    SERVICES.iter().copied().find(|s| s.name == name)
}

pub fn serving_port(name: &str) -> Option<u16> {
    service(name).and_then(|s| s.port)
}

/// All policies keyed by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicySet {
    pub policies: BTreeMap<String, NetworkPolicy>,
}

impl PolicySet {
    pub fn get(&self, name: &str) -> Option<&NetworkPolicy> {
        self.policies.get(name)
    }

    pub fn insert(&mut self, p: NetworkPolicy) -> Option<NetworkPolicy> {
        self.policies.insert(p.metadata.name.clone(), p)
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NetworkPolicy> {
        self.policies.values()
    }

    pub fn digest(&self) -> StateDigest {
        StateDigest::of(&self.policies)
    }

    /// Every policy as one multi-document YAML stream.
    pub fn to_yaml(&self) -> String {
        self.iter()
            .map(NetworkPolicy::to_yaml)
            .collect::<Vec<_>>()
            .join("---\n")
    }
}

/// Thirteen policies: a namespace-wide deny plus one allow policy per pod.
pub fn default_policies() -> PolicySet {
    let mut set = PolicySet {
        policies: BTreeMap::new(),
    };
    set.insert(NetworkPolicy::new(
        DENY_ALL,
        PolicySpec {
            pod_selector: Selector::default(),
            policy_types: vec![PolicyType::Ingress, PolicyType::Egress],
            ingress: vec![],
            egress: vec![],
        },
    ));
    for svc in SERVICES {
        let ingress = match svc.port {
            None => vec![],
            Some(port) if OPEN_INGRESS.contains(&svc.name) => vec![IngressRule {
                from: vec![],
                ports: vec![PortSpec::tcp(port)],
            }],
            Some(port) => EXPECTED_EDGES
                .iter()
                .filter(|(_, dst)| *dst == svc.name)
                .map(|(src, _)| IngressRule {
                    from: vec![Peer::app(src)],
                    ports: vec![PortSpec::tcp(port)],
                })
                .collect(),
        };
        let egress = EXPECTED_EDGES
            .iter()
            .filter(|(src, _)| *src == svc.name)
            .map(|(_, dst)| EgressRule {
                to: vec![Peer::app(dst)],
                ports: vec![],
            })
            .collect();
        set.insert(NetworkPolicy::new(
            svc.name,
            PolicySpec {
                pod_selector: Selector::app(svc.name),
                policy_types: vec![PolicyType::Ingress, PolicyType::Egress],
                ingress,
                egress,
            },
        ));
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_policies_with_ad_port() {
        let set = default_policies();
        assert_eq!(set.len(), 13);
        assert!(set.get("adservice").unwrap().to_yaml().contains("port: 9555"));
    }

    #[test]
    fn yaml_round_trip_is_exact() {
        let set = default_policies();
        let parsed = parse_policies(&set.to_yaml()).unwrap();
        assert_eq!(parsed.len(), 13);
        let mut again = PolicySet {
            policies: BTreeMap::new(),
        };
        for p in parsed {
            again.insert(p);
        }
        assert_eq!(again.digest(), set.digest());
        assert_eq!(again.to_yaml(), set.to_yaml());
    }

    #[test]
    fn malformed_yaml_is_an_error() {
        assert!(matches!(parse_policies("spec: [unclosed"), Err(YamlError::Parse(_))));
        assert!(parse_policies("apiVersion: v1\nkind: Pod\nmetadata: {name: x}\nspec: {podSelector: {}}").is_err());
        assert!(parse_policies("").is_err());
    }

    #[test]
    fn implied_policy_types() {
        let spec = PolicySpec {
            pod_selector: Selector::default(),
            policy_types: vec![],
            ingress: vec![],
            egress: vec![],
        };
        assert!(spec.governs(PolicyType::Ingress));
        assert!(!spec.governs(PolicyType::Egress));
    }
}

//! Router/host network state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use crate::model::StateDigest;

pub const DEFAULT_MTU: u32 = 1500;
pub const MIN_SWITCHES: u32 = 2;
pub const MAX_SWITCHES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iface {
    pub addrs: BTreeSet<Ipv4Net>,
    pub up: bool,
    pub mtu: u32,
    /// netem delay applied on egress, 0 when no qdisc is installed.
    pub delay_ms: u32,
}

impl Iface {
    pub fn primary(&self) -> Option<Ipv4Net> {
        self.addrs.iter().next().copied()
    }

    pub fn owns(&self, ip: Ipv4Addr) -> bool {
        self.addrs.iter().any(|a| a.addr() == ip)
    }

    pub fn on_link(&self, ip: Ipv4Addr) -> bool {
        self.addrs.iter().any(|a| a.contains(&ip))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Route {
    pub dest: Ipv4Net,
    pub metric: u32,
    pub dev: String,
    pub via: Option<Ipv4Addr>,
    /// Installed by the kernel for a configured address.
    pub kernel: bool,
    pub src: Option<Ipv4Addr>,
}

impl Route {
    pub fn kernel(addr: Ipv4Net, dev: &str) -> Self {
        Route {
            dest: addr.trunc(),
            metric: 0,
            dev: dev.to_string(),
            via: None,
            kernel: true,
            src: Some(addr.addr()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Chain {
    Input,
    Forward,
    Output,
}

impl Chain {
    pub const ALL: [Chain; 3] = [Chain::Input, Chain::Forward, Chain::Output];

    pub fn as_str(self) -> &'static str {
        match self {
            Chain::Input => "INPUT",
            Chain::Forward => "FORWARD",
            Chain::Output => "OUTPUT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Chain::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Accept,
    Drop,
    Reject,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accept => "ACCEPT",
            Verdict::Drop => "DROP",
            Verdict::Reject => "REJECT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ACCEPT" => Some(Verdict::Accept),
            "DROP" => Some(Verdict::Drop),
            "REJECT" => Some(Verdict::Reject),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    All,
    Icmp,
    Tcp,
    Udp,
}

impl Proto {
    pub fn as_str(self) -> &'static str {
        match self {
            Proto::All => "all",
            Proto::Icmp => "icmp",
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" | "0" => Some(Proto::All),
            "icmp" | "1" => Some(Proto::Icmp),
            "tcp" | "6" => Some(Proto::Tcp),
            "udp" | "17" => Some(Proto::Udp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FilterRule {
    pub src: Option<Ipv4Net>,
    pub dst: Option<Ipv4Net>,
    pub proto: Proto,
    pub in_iface: Option<String>,
    pub out_iface: Option<String>,
    pub target: Verdict,
}

impl FilterRule {
    pub fn new(target: Verdict) -> Self {
        Self {
            src: None,
            dst: None,
            proto: Proto::All,
            in_iface: None,
            out_iface: None,
            target,
        }
    }

    /// Rendering in `iptables -S` rule-spec form (without `-A CHAIN`).
    pub fn spec(&self) -> String {
        let mut parts = Vec::new();
        if let Some(s) = self.src {
            parts.push(format!("-s {s}"));
        }
        if let Some(d) = self.dst {
            parts.push(format!("-d {d}"));
        }
        if let Some(i) = &self.in_iface {
            parts.push(format!("-i {i}"));
        }
        if let Some(o) = &self.out_iface {
            parts.push(format!("-o {o}"));
        }
        if self.proto != Proto::All {
            parts.push(format!("-p {}", self.proto.as_str()));
        }
        parts.push(format!("-j {}", self.target.as_str()));
        parts.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleAction {
    Prohibit,
    Blackhole,
    Unreachable,
}

impl RuleAction {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleAction::Prohibit => "prohibit",
            RuleAction::Blackhole => "blackhole",
            RuleAction::Unreachable => "unreachable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IpRule {
    pub from: Option<Ipv4Net>,
    pub to: Option<Ipv4Net>,
    pub action: RuleAction,
}

impl IpRule {
    pub fn matches(&self, src: Ipv4Addr, dst: Ipv4Addr) -> bool {
        self.from.is_none_or(|n| n.contains(&src)) && self.to.is_none_or(|n| n.contains(&dst))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub name: String,
    pub iface: String,
    pub addr: Ipv4Net,
    pub gateway: Ipv4Addr,
    pub subnet: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("parameter out of range: {what} = {value} (allowed 2..=4)")]
pub struct ParameterOutOfRange {
    pub what: &'static str,
    pub value: u32,
}

/// Full emulated network. Every collection is ordered, so the derived
/// serialization is canonical; only iptables chains keep insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetState {
    pub prefix: String,
    pub num_switches: u32,
    pub hosts_per_subnet: u32,
    pub router: BTreeMap<String, Iface>,
    pub hosts: Vec<Host>,
    pub routes: BTreeSet<Route>,
    pub filters: BTreeMap<Chain, Vec<FilterRule>>,
    pub ip_forward: bool,
    /// Kept sorted.
    pub ip_rules: Vec<IpRule>,
}

pub fn subnet_net(k: u32) -> Ipv4Net {
    Ipv4Net::new(Ipv4Addr::new(192, 168, k as u8, 0), 24).expect("valid prefix")
}

pub fn gateway_addr(k: u32) -> Ipv4Net {
    Ipv4Net::new(Ipv4Addr::new(192, 168, k as u8, 1), 24).expect("valid prefix")
}

impl NetState {
    /// Healthy topology: one router interface per subnet, hosts
    /// `192.168.K.(100+i)` with gateway `192.168.K.1`.
    pub fn build(num_switches: u32, hosts_per_subnet: u32, prefix: &str) -> Result<Self, ParameterOutOfRange> {
        for (what, value) in [("num_switches", num_switches), ("hosts_per_subnet", hosts_per_subnet)] {
            if !(MIN_SWITCHES..=MAX_SWITCHES).contains(&value) {
                return Err(ParameterOutOfRange { what, value });
            }
        }
        let mut state = NetState {
            prefix: prefix.to_string(),
            num_switches,
            hosts_per_subnet,
            router: BTreeMap::new(),
            hosts: Vec::new(),
            routes: BTreeSet::new(),
            filters: Chain::ALL.into_iter().map(|c| (c, Vec::new())).collect(),
            ip_forward: true,
            ip_rules: Vec::new(),
        };
        let mut n = 1;
        for k in 1..=num_switches {
            let dev = state.iface_name(k);
            let addr = gateway_addr(k);
            state.router.insert(
                dev.clone(),
                Iface {
                    addrs: BTreeSet::from([addr]),
                    up: true,
                    mtu: DEFAULT_MTU,
                    delay_ms: 0,
                },
            );
            state.routes.insert(Route::kernel(addr, &dev));
            for i in 1..=hosts_per_subnet {
                let name = format!("{prefix}h{n}");
                state.hosts.push(Host {
                    iface: format!("{name}-eth0"),
                    name,
                    addr: Ipv4Net::new(Ipv4Addr::new(192, 168, k as u8, (100 + i) as u8), 24).expect("valid prefix"),
                    gateway: addr.addr(),
                    subnet: k,
                });
                n += 1;
            }
        }
        Ok(state)
    }

    pub fn router_name(&self) -> String {
        format!("{}r0", self.prefix)
    }

    pub fn iface_name(&self, k: u32) -> String {
        format!("{}r0-eth{k}", self.prefix)
    }

    /// Subnet index of a router interface name.
    pub fn iface_index(&self, dev: &str) -> Option<u32> {
        dev.strip_prefix(&format!("{}r0-eth", self.prefix))?.parse().ok()
    }

    pub fn host(&self, name: &str) -> Option<&Host> {
        self.hosts.iter().find(|h| h.name == name)
    }

    pub fn host_by_ip(&self, ip: Ipv4Addr) -> Option<&Host> {
        self.hosts.iter().find(|h| h.addr.addr() == ip)
    }

    pub fn router_owns(&self, ip: Ipv4Addr) -> bool {
        self.router.values().any(|i| i.owns(ip))
    }

    pub fn chain(&self, c: Chain) -> &[FilterRule] {
        self.filters.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn chain_mut(&mut self, c: Chain) -> &mut Vec<FilterRule> {
        self.filters.entry(c).or_default()
    }

    pub fn add_ip_rule(&mut self, rule: IpRule) {
        let at = self.ip_rules.partition_point(|r| r <= &rule);
        self.ip_rules.insert(at, rule);
    }

    pub fn digest(&self) -> StateDigest {
        StateDigest::of(self)
    }
}

impl fmt::Display for NetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} network (prefix {})",
            self.num_switches, self.hosts_per_subnet, self.prefix
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_names_and_addresses() {
        let s = NetState::build(2, 2, "p29_").unwrap();
        assert_eq!(
            s.router.keys().cloned().collect::<Vec<_>>(),
            vec!["p29_r0-eth1", "p29_r0-eth2"]
        );
        assert_eq!(s.hosts.len(), 4);
        assert_eq!(s.hosts[2].name, "p29_h3");
        assert_eq!(s.hosts[2].addr.to_string(), "192.168.2.101/24");
        assert_eq!(s.routes.len(), 2);
        assert_eq!(s.iface_index("p29_r0-eth2"), Some(2));
    }

    #[test]
    fn out_of_range_parameters_are_rejected() {
        assert!(NetState::build(1, 2, "").is_err());
        assert!(NetState::build(2, 5, "").is_err());
    }

    #[test]
    fn digest_ignores_ip_rule_insertion_order() {
        let base = NetState::build(2, 2, "").unwrap();
        let a_rule = IpRule {
            from: None,
            to: None,
            action: RuleAction::Prohibit,
        };
        let b_rule = IpRule {
            from: Some(subnet_net(1)),
            to: None,
            action: RuleAction::Blackhole,
        };
        let mut a = base.clone();
        a.add_ip_rule(a_rule.clone());
        a.add_ip_rule(b_rule.clone());
        let mut b = base;
        b.add_ip_rule(b_rule);
        b.add_ip_rule(a_rule);
        assert_eq!(a.digest(), b.digest());
    }
}

//! Fault injection families, their concrete commands and recorded inverses.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::command::{exec_command, CommandError};
use super::ping::{pingall, DEFAULT_DELAY_CEILING_MS};
use super::state::{subnet_net, NetState};
use crate::model::{ActionSpec, App, StateDigest};
use crate::transition::{ActionError, TransitionSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    DR,
    DI,
    RI,
    DT,
    WR,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::DR, Family::DI, Family::RI, Family::DT, Family::WR];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::DR => "DR",
            Family::DI => "DI",
            Family::RI => "RI",
            Family::DT => "DT",
            Family::WR => "WR",
        }
    }

    /// Registered action name.
    pub fn action_name(self) -> &'static str {
        match self {
            Family::DR => "disable_routing",
            Family::DI => "disable_interface",
            Family::RI => "remove_ip",
            Family::DT => "drop_traffic_to_from_subnet",
            Family::WR => "wrong_routing_table",
        }
    }

    pub fn from_action_name(name: &str) -> Option<Self> {
        Family::ALL.into_iter().find(|f| f.action_name() == name)
    }

    pub fn methods(self) -> u8 {
        match self {
            Family::DI => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = InjectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s || f.action_name() == s)
            .ok_or_else(|| InjectError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InjectError {
    #[error("unknown error family `{0}`")]
    UnknownFamily(String),
    #[error("{family} has no method m{method}")]
    MethodOutOfRange { family: Family, method: u8 },
    #[error("injection left every pair reachable")]
    IneffectiveInjection,
    #[error("malformed injection parameters: {0}")]
    BadParameters(String),
    #[error("injection command `{command}` failed: {source}")]
    Command {
        command: String,
        #[source]
        source: CommandError,
    },
}

/// The exact mutation applied, with the commands that undo it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub action: ActionSpec,
    pub commands: Vec<String>,
    /// Commands that restore reachability.
    pub repair: Vec<String>,
    /// Commands that restore the exact healthy configuration once reachability
    /// is back; they must not change reachability.
    pub cleanup: Vec<String>,
}

const WRONG_MASKS: [u8; 5] = [8, 16, 30, 31, 32];
const DELAYS_MS: [u32; 3] = [15_000, 20_000, 30_000];

fn parse_method(op: Option<&String>, family: Family) -> Result<u8, InjectError> {
    let m = op
        .and_then(|s| s.strip_prefix('m'))
        .and_then(|s| s.parse::<u8>().ok())
        .ok_or_else(|| InjectError::BadParameters(format!("{family}: method operand `m<N>` expected")))?;
    if m == 0 || m > family.methods() {
        return Err(InjectError::MethodOutOfRange { family, method: m });
    }
    Ok(m)
}

struct Params<'a> {
    state: &'a NetState,
    ops: &'a [String],
}

impl Params<'_> {
    fn iface(&self, i: usize) -> Result<(String, u32), InjectError> {
        let name = self
            .ops
            .get(i)
            .ok_or_else(|| InjectError::BadParameters(format!("operand {i} missing")))?;
        let full = if name.starts_with(&self.state.prefix) {
            name.clone()
        } else {
            format!("{}{name}", self.state.prefix)
        };
        let k = self
            .state
            .iface_index(&full)
            .ok_or_else(|| InjectError::BadParameters(format!("no router interface `{name}`")))?;
        Ok((full, k))
    }

    fn num(&self, i: usize) -> Result<u32, InjectError> {
        self.ops
            .get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| InjectError::BadParameters(format!("operand {i} must be a number")))
    }

    fn text(&self, i: usize) -> Result<&str, InjectError> {
        self.ops
            .get(i)
            .map(String::as_str)
            .ok_or_else(|| InjectError::BadParameters(format!("operand {i} missing")))
    }

    fn arity(&self, n: usize) -> Result<(), InjectError> {
        if self.ops.len() == n {
            Ok(())
        } else {
            Err(InjectError::BadParameters(format!(
                "expected {n} parameter(s), got {}",
                self.ops.len()
            )))
        }
    }
}

fn kernel_replace(dev: &str, k: u32) -> String {
    format!(
        "ip route replace {} dev {dev} proto kernel scope link src 192.168.{k}.1",
        subnet_net(k)
    )
}

fn ifconfig_set(dev: &str, addr: &str, len: u8) -> String {
    let mask = ipnet::Ipv4Net::new(addr.parse().expect("literal address"), len)
        .expect("len <= 32")
        .netmask();
    format!("ifconfig {dev} {addr} netmask {mask}")
}

/// Commands, repair and cleanup for one injection action against `state`.
pub fn plan_injection(state: &NetState, action: &ActionSpec) -> Result<InjectionRecord, InjectError> {
    let family =
        Family::from_action_name(&action.name).ok_or_else(|| InjectError::UnknownFamily(action.name.clone()))?;
    let method = parse_method(action.operands.first(), family)?;
    let p = Params {
        state,
        ops: &action.operands[1..],
    };
    let v = |s: &str| vec![s.to_string()];
    let (commands, repair, cleanup): (Vec<String>, Vec<String>, Vec<String>) = match (family, method) {
        (Family::DR, 1) => {
            p.arity(0)?;
            (
                v("sysctl -w net.ipv4.ip_forward=0"),
                v("sysctl -w net.ipv4.ip_forward=1"),
                vec![],
            )
        }
        (Family::DR, 2) => {
            p.arity(0)?;
            (
                v("iptables -A FORWARD -j DROP"),
                v("iptables -D FORWARD -j DROP"),
                vec![],
            )
        }
        (Family::DR, 3) => {
            p.arity(0)?;
            (
                v("ip rule add from all prohibit"),
                v("ip rule del from all prohibit"),
                vec![],
            )
        }
        (Family::DR, 4) => {
            p.arity(1)?;
            let (_, k) = p.iface(0)?;
            let rule = format!("FORWARD -s {} -j DROP", subnet_net(k));
            (
                v(&format!("iptables -A {rule}")),
                v(&format!("iptables -D {rule}")),
                vec![],
            )
        }
        (Family::DI, 1) => {
            p.arity(1)?;
            let (dev, _) = p.iface(0)?;
            (
                v(&format!("ifconfig {dev} down")),
                v(&format!("ifconfig {dev} up")),
                vec![],
            )
        }
        (Family::DI, 2) => {
            p.arity(1)?;
            let (dev, _) = p.iface(0)?;
            (
                v(&format!("ip link set dev {dev} down")),
                v(&format!("ip link set dev {dev} up")),
                vec![],
            )
        }
        (Family::DI, 3) => {
            p.arity(2)?;
            let (dev, _) = p.iface(0)?;
            let mtu = p.num(1)?;
            let old = state.router[&dev].mtu;
            (
                v(&format!("ip link set dev {dev} mtu {mtu}")),
                v(&format!("ip link set dev {dev} mtu {old}")),
                vec![],
            )
        }
        (Family::RI, 1) => {
            p.arity(1)?;
            let (dev, k) = p.iface(0)?;
            (
                v(&format!("ip addr flush dev {dev}")),
                v(&format!("ip addr add 192.168.{k}.1/24 dev {dev}")),
                vec![],
            )
        }
        (Family::RI, m @ 2..=4) => {
            p.arity(2)?;
            let (dev, k) = p.iface(0)?;
            let (addr, len) = match m {
                2 => {
                    let a: std::net::Ipv4Addr = p
                        .text(1)?
                        .parse()
                        .map_err(|_| InjectError::BadParameters("address expected".into()))?;
                    if a.octets()[..3] != [10, 0, 0] {
                        return Err(InjectError::BadParameters("address must lie in 10.0.0.0/24".into()));
                    }
                    (a.to_string(), 24)
                }
                3 => {
                    let mask = p.num(1)?;
                    if !WRONG_MASKS.contains(&(mask as u8)) || mask > 32 {
                        return Err(InjectError::BadParameters(format!(
                            "mask must be one of {WRONG_MASKS:?}"
                        )));
                    }
                    (format!("192.168.{k}.1"), mask as u8)
                }
                _ => {
                    let (_, j) = p.iface(1)?;
                    if j == k {
                        return Err(InjectError::BadParameters(
                            "duplicate must come from another subnet".into(),
                        ));
                    }
                    (format!("192.168.{j}.1"), 24)
                }
            };
            (
                v(&ifconfig_set(&dev, &addr, len)),
                v(&ifconfig_set(&dev, &format!("192.168.{k}.1"), 24)),
                vec![],
            )
        }
        (Family::DT, m @ 1..=3) => {
            p.arity(1)?;
            let (_, k) = p.iface(0)?;
            let rule = match m {
                1 => format!("INPUT -s {} -j DROP", subnet_net(k)),
                2 => format!("INPUT -s {} -j REJECT", subnet_net(k)),
                _ => format!("FORWARD -d {} -p icmp -j DROP", subnet_net(k)),
            };
            (
                v(&format!("iptables -A {rule}")),
                v(&format!("iptables -D {rule}")),
                vec![],
            )
        }
        (Family::DT, 4) => {
            p.arity(2)?;
            let (dev, _) = p.iface(0)?;
            let delay = p.num(1)?;
            (
                v(&format!("tc qdisc add dev {dev} root netem delay {delay}ms")),
                v(&format!("tc qdisc del dev {dev} root")),
                vec![],
            )
        }
        (Family::WR, m) => {
            let (dev_k, k) = p.iface(0)?;
            let (dev_j, j) = p.iface(1)?;
            if j == k {
                return Err(InjectError::BadParameters("wrong interface must differ".into()));
            }
            let net_k = subnet_net(k);
            let half = format!("192.168.{k}.0/25");
            match m {
                1 => {
                    p.arity(2)?;
                    (
                        vec![
                            format!("ip route del {net_k} dev {dev_k}"),
                            format!("ip route add {net_k} dev {dev_j}"),
                        ],
                        v(&kernel_replace(&dev_k, k)),
                        vec![],
                    )
                }
                2 => {
                    p.arity(2)?;
                    let r = format!("{half} via 192.168.{j}.254 dev {dev_j}");
                    (v(&format!("ip route add {r}")), v(&format!("ip route del {r}")), vec![])
                }
                3 => {
                    p.arity(3)?;
                    let high = p.num(2)?;
                    if high <= 10 {
                        return Err(InjectError::BadParameters("metric must exceed 10".into()));
                    }
                    (
                        vec![
                            format!("ip route del {net_k} dev {dev_k}"),
                            format!("ip route add {net_k} dev {dev_k} metric {high}"),
                            format!("ip route add {net_k} dev {dev_j} metric 10"),
                        ],
                        v(&format!("ip route del {net_k} dev {dev_j} metric 10")),
                        vec![
                            kernel_replace(&dev_k, k),
                            format!("ip route del {net_k} dev {dev_k} metric {high}"),
                        ],
                    )
                }
                _ => {
                    p.arity(2)?;
                    let r = format!("{half} via 192.168.{j}.1 dev {dev_j}");
                    (v(&format!("ip route add {r}")), v(&format!("ip route del {r}")), vec![])
                }
            }
        }
        (family, method) => return Err(InjectError::MethodOutOfRange { family, method }),
    };
    Ok(InjectionRecord {
        action: action.clone(),
        commands,
        repair,
        cleanup,
    })
}

fn run_all(state: &mut NetState, commands: &[String]) -> Result<(), InjectError> {
    let router = state.router_name();
    for c in commands {
        exec_command(state, &router, c).map_err(|source| InjectError::Command {
            command: c.clone(),
            source,
        })?;
    }
    Ok(())
}

/// Applies one injection action. Does not check effectiveness.
pub fn apply_injection(state: &mut NetState, action: &ActionSpec) -> Result<InjectionRecord, InjectError> {
    let record = plan_injection(state, action)?;
    let mut next = state.clone();
    run_all(&mut next, &record.commands)?;
    *state = next;
    Ok(record)
}

/// Samples a concrete injection action for `family`/`method`.
pub fn sample_injection<R: Rng>(
    state: &NetState,
    family: Family,
    method: u8,
    rng: &mut R,
) -> Result<ActionSpec, InjectError> {
    if method == 0 || method > family.methods() {
        return Err(InjectError::MethodOutOfRange { family, method });
    }
    let n = state.num_switches;
    let k = rng.gen_range(1..=n);
    let other = {
        let mut j = rng.gen_range(1..n);
        if j >= k {
            j += 1;
        }
        j
    };
    let dev = |i: u32| state.iface_name(i);
    let m = format!("m{method}");
    let operands: Vec<String> = match (family, method) {
        (Family::DR, 1..=3) => vec![m],
        (Family::DR, _) | (Family::DI, 1 | 2) | (Family::RI, 1) | (Family::DT, 1..=3) => vec![m, dev(k)],
        (Family::DI, _) => vec![m, dev(k), rng.gen_range(68..super::ping::MIN_MTU).to_string()],
        (Family::RI, 2) => vec![m, dev(k), format!("10.0.0.{}", rng.gen_range(2..=254))],
        (Family::RI, 3) => vec![m, dev(k), WRONG_MASKS.choose(rng).expect("nonempty").to_string()],
        (Family::RI, _) => vec![m, dev(k), dev(other)],
        (Family::DT, _) => vec![m, dev(k), DELAYS_MS.choose(rng).expect("nonempty").to_string()],
        (Family::WR, 3) => vec![m, dev(k), dev(other), rng.gen_range(100..=10_000u32).to_string()],
        (Family::WR, _) => vec![m, dev(k), dev(other)],
    };
    Ok(ActionSpec::new(family.action_name(), operands))
}

/// Samples and applies a single-family fault, rejecting ineffective ones.
pub fn inject_error<R: Rng>(
    state: &NetState,
    family: Family,
    method: u8,
    rng: &mut R,
) -> Result<(NetState, InjectionRecord), InjectError> {
    let action = sample_injection(state, family, method, rng)?;
    let mut next = state.clone();
    let record = apply_injection(&mut next, &action)?;
    if pingall(&next, DEFAULT_DELAY_CEILING_MS).all_reachable() {
        return Err(InjectError::IneffectiveInjection);
    }
    Ok((next, record))
}

impl TransitionSystem for NetState {
    fn app(&self) -> App {
        App::Routing
    }

    fn apply(&mut self, action: &ActionSpec) -> Result<(), ActionError> {
        if Family::from_action_name(&action.name).is_none() {
            return Err(ActionError::UnknownAction(action.name.clone()));
        }
        apply_injection(self, action)
            .map(|_| ())
            .map_err(|e| ActionError::Rejected(e.to_string()))
    }

    fn digest(&self) -> StateDigest {
        NetState::digest(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn healthy() -> NetState {
        NetState::build(2, 2, "p29_").unwrap()
    }

    #[test]
    fn interface_down_matches_reference_drop_rate() {
        let mut s = healthy();
        let a = ActionSpec::new("disable_interface", ["m1", "p29_r0-eth1"]);
        apply_injection(&mut s, &a).unwrap();
        assert_eq!(
            pingall(&s, DEFAULT_DELAY_CEILING_MS).summary_line(),
            "*** Results: 60% dropped (8/20 received)"
        );
    }

    #[test]
    fn every_method_inverts_exactly() {
        let base = NetState::build(3, 2, "p7_").unwrap();
        let router = base.router_name();
        for family in Family::ALL {
            for method in 1..=family.methods() {
                for salt in 0..8 {
                    let mut rng = seed::rng(seed::derive(u64::from(method), salt));
                    let action = sample_injection(&base, family, method, &mut rng).unwrap();
                    let mut s = base.clone();
                    let rec = apply_injection(&mut s, &action).unwrap();
                    assert_ne!(s.digest(), base.digest(), "{action}");
                    for c in rec.repair.iter().chain(&rec.cleanup) {
                        exec_command(&mut s, &router, c).unwrap();
                    }
                    assert_eq!(s.digest(), base.digest(), "{action}");
                }
            }
        }
    }

    #[test]
    fn wrong_mask_comes_from_the_fixed_set() {
        let mut rng = seed::rng(3);
        for _ in 0..20 {
            let a = sample_injection(&healthy(), Family::RI, 3, &mut rng).unwrap();
            let mask: u8 = a.operands[2].parse().unwrap();
            assert!(WRONG_MASKS.contains(&mask));
        }
    }

    #[test]
    fn pair_injection_keeps_both_mutations() {
        let mut s = healthy();
        s.apply(&ActionSpec::new("disable_routing", ["m1"])).unwrap();
        s.apply(&ActionSpec::new("disable_interface", ["m1", "p29_r0-eth2"]))
            .unwrap();
        assert!(!s.ip_forward);
        assert!(!s.router["p29_r0-eth2"].up);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let s = healthy();
        assert!(matches!(
            plan_injection(&s, &ActionSpec::new("disable_interface", ["m4", "p29_r0-eth1"])),
            Err(InjectError::MethodOutOfRange { .. })
        ));
        assert!(matches!(
            plan_injection(&s, &ActionSpec::new("melt", ["m1"])),
            Err(InjectError::UnknownFamily(_))
        ));
        assert!(plan_injection(&s, &ActionSpec::new("disable_interface", ["m1", "eth9"])).is_err());
        assert!("XX".parse::<Family>().is_err());
    }
}

//! Packet-level reachability model and pingall rendering.

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::state::{Chain, NetState, Proto, Route, Verdict};

/// Forwarding decisions allowed before a packet is considered looping.
pub const MAX_HOPS: u32 = 8;
/// Interfaces below this MTU cannot carry the probe.
pub const MIN_MTU: u32 = 576;
pub const DEFAULT_DELAY_CEILING_MS: u32 = 10_000;

pub const PING_HEADER: &str = "*** Ping: testing ping reachability";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PingMatrix {
    /// Hosts in order, then the router.
    pub nodes: Vec<String>,
    pub reachable: Vec<Vec<bool>>,
    /// Reachable but delayed by netem.
    pub slow: Vec<Vec<bool>>,
}

pub fn summary_line(received: usize, total: usize) -> String {
    let dropped = if total == 0 {
        0
    } else {
        (100.0 * (total - received) as f64 / total as f64).round() as usize
    };
    format!("*** Results: {dropped}% dropped ({received}/{total} received)")
}

impl PingMatrix {
    pub fn from_reachable(nodes: Vec<String>, reachable: Vec<Vec<bool>>) -> Self {
        let n = nodes.len();
        Self {
            nodes,
            reachable,
            slow: vec![vec![false; n]; n],
        }
    }

    pub fn total(&self) -> usize {
        let n = self.nodes.len();
        n * n.saturating_sub(1)
    }

    pub fn received(&self) -> usize {
        self.pairs().filter(|&(i, j)| self.reachable[i][j]).count()
    }

    pub fn failures(&self) -> usize {
        self.total() - self.received()
    }

    pub fn all_reachable(&self) -> bool {
        self.failures() == 0
    }

    /// Ordered off-diagonal pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.nodes.len();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    pub fn summary_line(&self) -> String {
        summary_line(self.received(), self.total())
    }

    pub fn render(&self) -> String {
        let mut out = String::from(PING_HEADER);
        out.push('\n');
        for (i, a) in self.nodes.iter().enumerate() {
            out.push_str(a);
            out.push_str(" ->");
            for (j, b) in self.nodes.iter().enumerate() {
                if i != j {
                    out.push(' ');
                    out.push_str(if self.reachable[i][j] { b } else { "X" });
                }
            }
            out.push('\n');
        }
        out.push_str(&self.summary_line());
        out
    }
}

#[derive(Clone, Copy)]
enum Hop<'a> {
    Host(&'a super::state::Host),
    Router,
}

struct Sim<'a> {
    state: &'a NetState,
}

impl<'a> Sim<'a> {
    fn chain_allows(
        &self,
        chain: Chain,
        src: Ipv4Addr,
        dst: Ipv4Addr,
        in_dev: Option<&str>,
        out_dev: Option<&str>,
    ) -> bool {
        for rule in self.state.chain(chain) {
            let matches = rule.src.is_none_or(|n| n.contains(&src))
                && rule.dst.is_none_or(|n| n.contains(&dst))
                && matches!(rule.proto, Proto::All | Proto::Icmp)
                && rule.in_iface.as_deref().is_none_or(|i| Some(i) == in_dev)
                && rule.out_iface.as_deref().is_none_or(|o| Some(o) == out_dev);
            if matches {
                return rule.target == Verdict::Accept;
            }
        }
        true
    }

    /// Longest prefix, then lowest metric, then lowest device name. Routes
    /// on a down device are not usable.
    fn lookup(&self, dst: Ipv4Addr) -> Option<&'a Route> {
        self.state
            .routes
            .iter()
            .filter(|r| r.dest.contains(&dst))
            .filter(|r| self.state.router.get(&r.dev).is_some_and(|i| i.up))
            .min_by(|a, b| {
                b.dest
                    .prefix_len()
                    .cmp(&a.dest.prefix_len())
                    .then(a.metric.cmp(&b.metric))
                    .then(a.dev.cmp(&b.dev))
            })
    }

    fn source_for(&self, route: &Route) -> Option<Ipv4Addr> {
        route
            .src
            .filter(|s| self.state.router_owns(*s))
            .or_else(|| self.state.router.get(&route.dev)?.primary().map(|a| a.addr()))
            .or_else(|| self.state.router.values().find_map(|i| i.primary()).map(|a| a.addr()))
    }

    /// Frame put on segment `k` for layer-2 address `next_hop`.
    #[allow(clippy::too_many_arguments)]
    fn on_segment(
        &self,
        k: u32,
        next_hop: Ipv4Addr,
        src: Ipv4Addr,
        dst: Ipv4Addr,
        from_router: bool,
        hops: u32,
        delay: u32,
    ) -> Option<u32> {
        if let Some(h) = self
            .state
            .hosts
            .iter()
            .find(|h| h.subnet == k && h.addr.addr() == next_hop)
        {
            // Hosts do not forward.
            return (h.addr.addr() == dst).then_some(delay);
        }
        if from_router {
            return None;
        }
        let dev = self.state.iface_name(k);
        let iface = self.state.router.get(&dev)?;
        if !iface.up || iface.mtu < MIN_MTU || !self.state.router_owns(next_hop) {
            return None;
        }
        self.router_receive(&dev, src, dst, hops, delay)
    }

    fn router_receive(&self, in_dev: &str, src: Ipv4Addr, dst: Ipv4Addr, hops: u32, delay: u32) -> Option<u32> {
        if self.state.router_owns(dst) {
            return self
                .chain_allows(Chain::Input, src, dst, Some(in_dev), None)
                .then_some(delay);
        }
        if !self.state.ip_forward || hops >= MAX_HOPS {
            return None;
        }
        if self.state.ip_rules.iter().any(|r| r.matches(src, dst)) {
            return None;
        }
        let route = self.lookup(dst)?;
        if !self.chain_allows(Chain::Forward, src, dst, Some(in_dev), Some(&route.dev)) {
            return None;
        }
        self.egress(route, src, dst, hops + 1, delay)
    }

    fn egress(&self, route: &Route, src: Ipv4Addr, dst: Ipv4Addr, hops: u32, delay: u32) -> Option<u32> {
        let iface = self.state.router.get(&route.dev)?;
        if !iface.up || iface.mtu < MIN_MTU {
            return None;
        }
        let delay = delay.saturating_add(iface.delay_ms);
        let next_hop = route.via.unwrap_or(dst);
        if route.via.is_some() && self.state.router_owns(next_hop) {
            // Gateway is one of our own addresses: the packet comes back in.
            return self.router_receive(&route.dev, src, dst, hops, delay);
        }
        let k = self.state.iface_index(&route.dev)?;
        self.on_segment(k, next_hop, src, dst, true, hops, delay)
    }

    fn host_send(&self, host: &super::state::Host, dst: Ipv4Addr) -> Option<u32> {
        let src = host.addr.addr();
        if dst == src {
            return Some(0);
        }
        let next_hop = if host.addr.contains(&dst) { dst } else { host.gateway };
        self.on_segment(host.subnet, next_hop, src, dst, false, 0, 0)
    }

    /// Router-originated packet; `src` is forced for replies.
    fn router_send(&self, src: Option<Ipv4Addr>, dst: Ipv4Addr) -> Option<(Ipv4Addr, u32)> {
        if self.state.router_owns(dst) {
            return Some((dst, 0));
        }
        let route = self.lookup(dst)?;
        let src = match src {
            Some(s) => s,
            None => self.source_for(route)?,
        };
        if !self.chain_allows(Chain::Output, src, dst, None, Some(&route.dev)) {
            return None;
        }
        Some((src, self.egress(route, src, dst, 0, 0)?))
    }

    /// Round-trip delay of an echo from `a` to `b`, if it completes.
    fn echo(&self, a: Hop<'_>, b: Hop<'_>) -> Option<u32> {
        match (a, b) {
            (Hop::Host(x), Hop::Host(y)) => {
                let req = self.host_send(x, y.addr.addr())?;
                let rep = self.host_send(y, x.addr.addr())?;
                Some(req.saturating_add(rep))
            }
            (Hop::Host(x), Hop::Router) => {
                let target = super::state::gateway_addr(x.subnet).addr();
                let req = self.host_send(x, target)?;
                let (_, rep) = self.router_send(Some(target), x.addr.addr())?;
                Some(req.saturating_add(rep))
            }
            (Hop::Router, Hop::Host(y)) => {
                let (src, req) = self.router_send(None, y.addr.addr())?;
                let rep = self.host_send(y, src)?;
                Some(req.saturating_add(rep))
            }
            (Hop::Router, Hop::Router) => Some(0),
        }
    }
}

/// All-pairs echo test over hosts then router.
pub fn pingall(state: &NetState, delay_ceiling_ms: u32) -> PingMatrix {
    let sim = Sim { state };
    let mut hops: Vec<Hop<'_>> = state.hosts.iter().map(Hop::Host).collect();
    hops.push(Hop::Router);
    let mut nodes: Vec<String> = state.hosts.iter().map(|h| h.name.clone()).collect();
    nodes.push(state.router_name());
    let n = hops.len();
    let mut reachable = vec![vec![false; n]; n];
    let mut slow = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let Some(rtt) = sim.echo(hops[i], hops[j]) {
                reachable[i][j] = rtt <= delay_ceiling_ms;
                slow[i][j] = rtt > 0;
            }
        }
    }
    PingMatrix { nodes, reachable, slow }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::state::{FilterRule, IpRule, RuleAction};

    fn healthy() -> NetState {
        NetState::build(2, 2, "").unwrap()
    }

    #[test]
    fn healthy_is_fully_reachable() {
        let m = pingall(&healthy(), DEFAULT_DELAY_CEILING_MS);
        assert!(m.all_reachable());
        assert_eq!(m.summary_line(), "*** Results: 0% dropped (20/20 received)");
    }

    #[test]
    fn interface_down_matches_hand_count() {
        let mut s = healthy();
        s.router.get_mut("r0-eth1").unwrap().up = false;
        let m = pingall(&s, DEFAULT_DELAY_CEILING_MS);
        assert_eq!(m.summary_line(), "*** Results: 60% dropped (8/20 received)");
        assert!(m.render().contains("h3 -> X X h4 r0"));
    }

    #[test]
    fn forwarding_off_keeps_router_pairs() {
        let mut s = healthy();
        s.ip_forward = false;
        let m = pingall(&s, DEFAULT_DELAY_CEILING_MS);
        // intra-subnet 4 + host<->router 8
        assert_eq!(m.received(), 12);
    }

    #[test]
    fn prohibit_rule_blocks_forwarding_only() {
        let mut s = healthy();
        s.add_ip_rule(IpRule {
            from: None,
            to: None,
            action: RuleAction::Prohibit,
        });
        assert_eq!(pingall(&s, DEFAULT_DELAY_CEILING_MS).received(), 12);
    }

    #[test]
    fn input_drop_isolates_subnet_from_router() {
        let mut s = healthy();
        let mut rule = FilterRule::new(Verdict::Drop);
        rule.src = Some(crate::routing::state::subnet_net(1));
        s.chain_mut(Chain::Input).push(rule);
        assert_eq!(pingall(&s, DEFAULT_DELAY_CEILING_MS).failures(), 4);
    }

    #[test]
    fn self_gateway_loop_terminates() {
        let mut s = healthy();
        s.routes.insert(Route {
            dest: "192.168.1.0/25".parse().unwrap(),
            metric: 0,
            dev: "r0-eth2".into(),
            via: Some("192.168.2.1".parse().unwrap()),
            kernel: false,
            src: None,
        });
        let m = pingall(&s, DEFAULT_DELAY_CEILING_MS);
        assert!(!m.all_reachable());
    }

    #[test]
    fn delay_above_ceiling_fails_below_is_slow() {
        let mut s = healthy();
        s.router.get_mut("r0-eth1").unwrap().delay_ms = 50;
        let m = pingall(&s, DEFAULT_DELAY_CEILING_MS);
        assert!(m.all_reachable());
        assert!(m.slow[0][2]);
        s.router.get_mut("r0-eth1").unwrap().delay_ms = 20_000;
        assert!(!pingall(&s, DEFAULT_DELAY_CEILING_MS).all_reachable());
    }

    #[test]
    fn summary_rounding() {
        assert_eq!(summary_line(10, 42), "*** Results: 76% dropped (10/42 received)");
        assert_eq!(summary_line(8, 20), "*** Results: 60% dropped (8/20 received)");
    }
}

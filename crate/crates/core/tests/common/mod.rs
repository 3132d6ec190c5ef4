#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use netbench::cp::graph::CAPACITY_ATTR;
use netbench::cp::{AttrValue, CpGraph, EdgeKind, Node, NodeKind};
use rand::seq::SliceRandom;
use rand::Rng;

pub const PORT_SPEEDS: [i64; 4] = [10_000_000_000, 40_000_000_000, 100_000_000_000, 400_000_000_000];

/// Random topology that obeys every structural rule, built without the
/// crate's generator. Switches may hang under several legal parents.
pub struct GraphBuilder {
    pub g: CpGraph,
    by_kind: BTreeMap<NodeKind, Vec<String>>,
    next: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        let mut b = Self {
            g: CpGraph::new(),
            by_kind: BTreeMap::new(),
            next: 0,
        };
        let j = b.node(NodeKind::Jupiter, None);
        let spine = b.node(NodeKind::SpineBlock, Some(&j));
        let s = b.node(NodeKind::PacketSwitch, Some(&spine));
        b.node(NodeKind::Port, Some(&s));
        b
    }

    fn node(&mut self, kind: NodeKind, parent: Option<&str>) -> String {
        let name = format!("{}.{}", kind.short().to_ascii_lowercase(), self.next);
        self.next += 1;
        let mut node = Node::new(kind.clone());
        if kind == NodeKind::Port {
            node = node.with_attr(
                CAPACITY_ATTR,
                AttrValue::Int(PORT_SPEEDS[self.next % PORT_SPEEDS.len()]),
            );
        }
        self.g.insert_node(name.clone(), node);
        if let Some(p) = parent {
            self.g.insert_edge(p.to_string(), name.clone(), EdgeKind::Contains);
        }
        self.by_kind.entry(kind).or_default().push(name.clone());
        name
    }

    fn pick<R: Rng>(&self, kinds: &[NodeKind], rng: &mut R) -> Option<String> {
        let pool: Vec<&String> = kinds
            .iter()
            .flat_map(|k| self.by_kind.get(k).into_iter().flatten())
            .collect();
        pool.choose(rng).map(|s| s.to_string())
    }

    fn switch<R: Rng>(&mut self, parent: &str, rng: &mut R) {
        let s = self.node(NodeKind::PacketSwitch, Some(parent));
        for _ in 0..rng.gen_range(1..=3) {
            self.node(NodeKind::Port, Some(&s));
        }
    }

    pub fn grow<R: Rng>(&mut self, rng: &mut R) {
        let jupiter = self.by_kind[&NodeKind::Jupiter][0].clone();
        match rng.gen_range(0..7) {
            0 => {
                self.node(NodeKind::SuperBlock, Some(&jupiter));
            }
            1 => {
                let parent = self
                    .pick(&[NodeKind::SuperBlock, NodeKind::SpineBlock], rng)
                    .unwrap_or_else(|| self.node(NodeKind::SpineBlock, Some(&jupiter)));
                self.node(NodeKind::AggBlock, Some(&parent));
            }
            2 => {
                self.node(NodeKind::SpineBlock, Some(&jupiter));
            }
            3 => {
                let parent = self
                    .pick(
                        &[
                            NodeKind::AggBlock,
                            NodeKind::SpineBlock,
                            NodeKind::Chassis,
                            NodeKind::ControlPoint,
                        ],
                        rng,
                    )
                    .unwrap_or_else(|| self.node(NodeKind::SpineBlock, Some(&jupiter)));
                self.switch(&parent, rng);
            }
            4 => {
                if let Some(s) = self.pick(&[NodeKind::PacketSwitch], rng) {
                    self.node(NodeKind::Port, Some(&s));
                }
            }
            5 => {
                let (Some(s), Some(p)) = (
                    self.pick(&[NodeKind::PacketSwitch], rng),
                    self.pick(
                        &[
                            NodeKind::AggBlock,
                            NodeKind::SpineBlock,
                            NodeKind::Chassis,
                            NodeKind::ControlPoint,
                        ],
                        rng,
                    ),
                ) else {
                    return;
                };
                if !self.g.parents(&s).contains(&p) {
                    self.g.insert_edge(p, s, EdgeKind::Contains);
                }
            }
            _ => {
                let rack = self.node(NodeKind::Rack, None);
                let chassis = self.node(NodeKind::Chassis, Some(&rack));
                let cp = self.node(NodeKind::ControlPoint, Some(&chassis));
                if rng.gen_bool(0.5) {
                    let domain = self.node(NodeKind::ControlDomain, None);
                    self.g.insert_edge(domain, cp.clone(), EdgeKind::Contains);
                }
                self.switch(&cp, rng);
            }
        }
    }

    pub fn build<R: Rng>(max_nodes: usize, rng: &mut R) -> CpGraph {
        let mut b = Self::new();
        while b.g.node_count() + 5 < max_nodes {
            b.grow(rng);
        }
        b.g
    }
}

/// Capacity by walking raw containment edges with an explicit visited set.
pub fn brute_capacity(g: &CpGraph, root: &str) -> i64 {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in g.edges() {
        if e.kind == EdgeKind::Contains {
            adj.entry(e.src.as_str()).or_default().push(e.dst.as_str());
        }
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![root];
    let mut total = 0;
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        if let Some(node) = g.node(n) {
            if node.kind == NodeKind::Port {
                if let Some(AttrValue::Int(c)) = node.attrs.get(CAPACITY_ATTR) {
                    total += c;
                }
            }
        }
        stack.extend(adj.get(n).into_iter().flatten().copied());
    }
    total
}

/// Drop percentage with half-up rounding in integer arithmetic.
pub fn dropped_percent(received: usize, total: usize) -> usize {
    if total == 0 {
        0
    } else {
        (200 * (total - received) + total) / (2 * total)
    }
}

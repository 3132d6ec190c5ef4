//! Hierarchical datacenter topology graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::StateDigest;

pub const CAPACITY_ATTR: &str = "physical_capacity_bps";
pub const SWITCH_LOC_ATTR: &str = "switch_loc";

/// The ten entity kinds of the topology model.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    #[serde(rename = "EK_JUPITER")]
    Jupiter,
    #[serde(rename = "EK_SPINE_BLOCK")]
    SpineBlock,
    #[serde(rename = "EK_SUPER_BLOCK")]
    SuperBlock,
    #[serde(rename = "EK_AGG_BLOCK")]
    AggBlock,
    #[serde(rename = "EK_PACKET_SWITCH")]
    PacketSwitch,
    #[serde(rename = "EK_PORT")]
    Port,
    #[serde(rename = "EK_CHASSIS")]
    Chassis,
    #[serde(rename = "EK_CONTROL_POINT")]
    ControlPoint,
    #[serde(rename = "EK_RACK")]
    Rack,
    #[serde(rename = "EK_CONTROL_DOMAIN")]
    ControlDomain,
    /// Anything else found in an input file; always a safety violation.
    #[serde(untagged)]
    Unknown(String),
}

impl NodeKind {
    pub const KNOWN: [NodeKind; 10] = [
        NodeKind::Jupiter,
        NodeKind::SpineBlock,
        NodeKind::SuperBlock,
        NodeKind::AggBlock,
        NodeKind::PacketSwitch,
        NodeKind::Port,
        NodeKind::Chassis,
        NodeKind::ControlPoint,
        NodeKind::Rack,
        NodeKind::ControlDomain,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            NodeKind::Jupiter => "EK_JUPITER",
            NodeKind::SpineBlock => "EK_SPINE_BLOCK",
            NodeKind::SuperBlock => "EK_SUPER_BLOCK",
            NodeKind::AggBlock => "EK_AGG_BLOCK",
            NodeKind::PacketSwitch => "EK_PACKET_SWITCH",
            NodeKind::Port => "EK_PORT",
            NodeKind::Chassis => "EK_CHASSIS",
            NodeKind::ControlPoint => "EK_CONTROL_POINT",
            NodeKind::Rack => "EK_RACK",
            NodeKind::ControlDomain => "EK_CONTROL_DOMAIN",
            NodeKind::Unknown(s) => s,
        }
    }

    /// Human label used in query text, e.g. `PACKET_SWITCH`.
    pub fn short(&self) -> &str {
        self.as_str().strip_prefix("EK_").unwrap_or(self.as_str())
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, NodeKind::Unknown(_))
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = std::convert::Infallible;

    /// Accepts `EK_PORT` as well as the bare `PORT`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        let full = if upper.starts_with("EK_") {
            upper
        } else {
            format!("EK_{upper}")
        };
        Ok(NodeKind::KNOWN
            .iter()
            .find(|k| k.as_str() == full)
            .cloned()
            .unwrap_or_else(|| NodeKind::Unknown(s.trim().to_string())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "RK_CONTAINS")]
    Contains,
    #[serde(rename = "RK_CONTROL")]
    Control,
    #[serde(untagged)]
    Unknown(String),
}

impl EdgeKind {
    pub fn as_str(&self) -> &str {
        match self {
            EdgeKind::Contains => "RK_CONTAINS",
            EdgeKind::Control => "RK_CONTROL",
            EdgeKind::Unknown(s) => s,
        }
    }
}

impl FromStr for EdgeKind {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "RK_CONTAINS" => EdgeKind::Contains,
            "RK_CONTROL" | "RK_CONTROLS" => EdgeKind::Control,
            other => EdgeKind::Unknown(other.to_string()),
        })
    }
}

/// The twelve legal `(container, contained)` pairs.
pub const HIERARCHY: [(NodeKind, NodeKind); 12] = [
    (NodeKind::Jupiter, NodeKind::SpineBlock),
    (NodeKind::SpineBlock, NodeKind::AggBlock),
    (NodeKind::AggBlock, NodeKind::PacketSwitch),
    (NodeKind::Chassis, NodeKind::ControlPoint),
    (NodeKind::ControlPoint, NodeKind::PacketSwitch),
    (NodeKind::Rack, NodeKind::Chassis),
    (NodeKind::PacketSwitch, NodeKind::Port),
    (NodeKind::SpineBlock, NodeKind::PacketSwitch),
    (NodeKind::ControlDomain, NodeKind::ControlPoint),
    (NodeKind::Chassis, NodeKind::PacketSwitch),
    (NodeKind::Jupiter, NodeKind::SuperBlock),
    (NodeKind::SuperBlock, NodeKind::AggBlock),
];

pub fn may_contain(parent: &NodeKind, child: &NodeKind) -> bool {
    HIERARCHY.iter().any(|(p, c)| p == parent && c == child)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Text(String),
}

impl AttrValue {
    pub fn parse(raw: &str) -> Self {
        raw.parse::<i64>()
            .map(AttrValue::Int)
            .unwrap_or_else(|_| AttrValue::Text(raw.to_string()))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            AttrValue::Text(_) => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Int(v) => write!(f, "{v}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub attrs: BTreeMap<String, AttrValue>,
}

impl Node {
    pub fn new(kind: NodeKind) -> Self {
        Self {
            kind,
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: &str, value: AttrValue) -> Self {
        self.attrs.insert(key.to_string(), value);
        self
    }

    pub fn capacity(&self) -> Option<i64> {
        self.attrs.get(CAPACITY_ATTR).and_then(AttrValue::as_int)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
}

/// Directed, named topology graph. Node and edge collections are ordered so
/// that serialization is canonical regardless of insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CpGraph {
    nodes: BTreeMap<String, Node>,
    edges: BTreeSet<Edge>,
    // (dst, src, kind) for parent lookups.
    reverse: BTreeSet<(String, String, EdgeKind)>,
}

#[derive(Serialize)]
struct Canonical<'a> {
    nodes: &'a BTreeMap<String, Node>,
    edges: &'a BTreeSet<Edge>,
}

impl CpGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.get(name)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut Node> {
        self.nodes.get_mut(name)
    }

    pub fn contains_node(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &Node)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    /// Inserts or replaces a node.
    pub fn insert_node(&mut self, name: impl Into<String>, node: Node) {
        self.nodes.insert(name.into(), node);
    }

    /// Inserts an edge; endpoints are not required to exist (the safety
    /// checker reports dangling edges).
    pub fn insert_edge(&mut self, src: impl Into<String>, dst: impl Into<String>, kind: EdgeKind) {
        let edge = Edge {
            src: src.into(),
            dst: dst.into(),
            kind,
        };
        self.reverse
            .insert((edge.dst.clone(), edge.src.clone(), edge.kind.clone()));
        self.edges.insert(edge);
    }

    /// Removes a node together with every incident edge.
    pub fn remove_node(&mut self, name: &str) -> Option<Node> {
        let node = self.nodes.remove(name)?;
        let outgoing: Vec<Edge> = self.out_edges(name).cloned().collect();
        let incoming: Vec<Edge> = self.in_edges(name).collect();
        for e in outgoing.into_iter().chain(incoming) {
            self.reverse.remove(&(e.dst.clone(), e.src.clone(), e.kind.clone()));
            self.edges.remove(&e);
        }
        Some(node)
    }

    pub fn out_edges<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        let start = Edge {
            src: name.to_string(),
            dst: String::new(),
            kind: EdgeKind::Contains,
        };
        self.edges.range(start..).take_while(move |e| e.src == name)
    }

    pub fn in_edges<'a>(&'a self, name: &'a str) -> impl Iterator<Item = Edge> + 'a {
        let start = (name.to_string(), String::new(), EdgeKind::Contains);
        self.reverse
            .range(start..)
            .take_while(move |(dst, _, _)| dst == name)
            .map(|(dst, src, kind)| Edge {
                src: src.clone(),
                dst: dst.clone(),
                kind: kind.clone(),
            })
    }

    /// Direct `RK_CONTAINS` children, sorted by name.
    pub fn children<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.out_edges(name)
            .filter(|e| e.kind == EdgeKind::Contains)
            .map(|e| e.dst.as_str())
    }

    /// Direct `RK_CONTAINS` parents, sorted by name.
    pub fn parents(&self, name: &str) -> Vec<String> {
        self.in_edges(name)
            .filter(|e| e.kind == EdgeKind::Contains)
            .map(|e| e.src)
            .collect()
    }

    pub fn degree(&self, name: &str) -> usize {
        self.out_edges(name).count() + self.in_edges(name).count()
    }

    /// All nodes reachable from `name` through containment, excluding `name`.
    pub fn descendants(&self, name: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<String> = self.children(name).map(str::to_string).collect();
        while let Some(n) = stack.pop() {
            if seen.insert(n.clone()) {
                stack.extend(self.children(&n).map(str::to_string));
            }
        }
        seen.remove(name);
        seen
    }

    /// Sum of port capacities over the containment closure of `name`
    /// (including `name` itself when it is a port).
    pub fn capacity(&self, name: &str) -> i64 {
        let own = self
            .node(name)
            .filter(|n| n.kind == NodeKind::Port)
            .and_then(Node::capacity)
            .unwrap_or(0);
        own + self
            .descendants(name)
            .iter()
            .filter_map(|d| self.node(d))
            .filter(|n| n.kind == NodeKind::Port)
            .filter_map(Node::capacity)
            .sum::<i64>()
    }

    pub fn digest(&self) -> StateDigest {
        StateDigest::of(&Canonical {
            nodes: &self.nodes,
            edges: &self.edges,
        })
    }

    /// Writes the line-oriented fixture format.
    pub fn write_fixture<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# cp topology: {} nodes, {} edges",
            self.node_count(),
            self.edge_count()
        )?;
        for (name, node) in &self.nodes {
            write!(out, "node {name} {}", node.kind)?;
            for (k, v) in &node.attrs {
                write!(out, " {k}={v}")?;
            }
            writeln!(out)?;
        }
        for e in &self.edges {
            writeln!(out, "edge {} {} {}", e.src, e.dst, e.kind.as_str())?;
        }
        Ok(())
    }

    pub fn to_fixture_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_fixture(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("fixture is utf-8")
    }

    /// Parses the fixture format without validating invariants.
    pub fn parse_fixture<R: BufRead>(input: R) -> Result<Self, LoadError> {
        let mut graph = CpGraph::new();
        let mut records = 0usize;
        for (idx, line) in input.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| LoadError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let err = |message: &str| LoadError::Parse {
                line: line_no,
                message: message.to_string(),
            };
            match fields.next() {
                Some("node") => {
                    let name = fields.next().ok_or_else(|| err("node record needs a name"))?;
                    let kind = fields.next().ok_or_else(|| err("node record needs a type"))?;
                    let mut node = Node::new(kind.parse().expect("infallible"));
                    for kv in fields {
                        let (k, v) = kv.split_once('=').ok_or_else(|| err("attributes must be key=value"))?;
                        node.attrs.insert(k.to_string(), AttrValue::parse(v));
                    }
                    if graph.contains_node(name) {
                        return Err(err(&format!("duplicate node `{name}`")));
                    }
                    graph.insert_node(name, node);
                }
                Some("edge") => {
                    let parts: Vec<&str> = fields.collect();
                    let [src, dst, kind] = parts[..] else {
                        return Err(err("edge record needs src, dst and type"));
                    };
                    graph.insert_edge(src, dst, kind.parse().expect("infallible"));
                }
                Some(other) => return Err(err(&format!("unknown record type `{other}`"))),
                None => unreachable!("blank lines are skipped"),
            }
            records += 1;
        }
        if records == 0 {
            return Err(LoadError::Parse {
                line: 0,
                message: "topology file contains no records".into(),
            });
        }
        Ok(graph)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("topology violates {} invariant(s): {}", .0.len(), summarize(.0))]
    InvariantViolation(Vec<super::safety::Violation>),
}

fn summarize(v: &[super::safety::Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(ToString::to_string).collect();
    let mut s = shown.join("; ");
    if v.len() > 5 {
        s.push_str(&format!("; ... {} more", v.len() - 5));
    }
    s
}

/// Loads a topology fixture and rejects it unless it passes every invariant.
pub fn load_topology(path: &Path) -> Result<CpGraph, LoadError> {
    let file = std::fs::File::open(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_topology_from(BufReader::new(file))
}

pub fn load_topology_from<R: BufRead>(input: R) -> Result<CpGraph, LoadError> {
    let graph = CpGraph::parse_fixture(input)?;
    let violations = super::safety::check_safety_cp(&graph);
    if violations.is_empty() {
        Ok(graph)
    } else {
        Err(LoadError::InvariantViolation(violations))
    }
}

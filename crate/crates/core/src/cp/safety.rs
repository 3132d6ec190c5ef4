//! Structural invariants of a topology graph.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::graph::{may_contain, AttrValue, CpGraph, EdgeKind, NodeKind, CAPACITY_ATTR};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    IllegalNodeType {
        node: String,
        kind: String,
    },
    IllegalEdgeType {
        src: String,
        dst: String,
        kind: String,
    },
    DanglingEdge {
        src: String,
        dst: String,
    },
    HierarchyViolation {
        src: String,
        dst: String,
        src_kind: String,
        dst_kind: String,
    },
    MissingAttribute {
        node: String,
        attribute: String,
    },
    InvalidAttribute {
        node: String,
        attribute: String,
        value: String,
    },
    IsolatedNode {
        node: String,
    },
    SwitchWithoutPort {
        node: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IllegalNodeType { node, kind } => write!(f, "{node} has illegal type {kind}"),
            Violation::IllegalEdgeType { src, dst, kind } => {
                write!(f, "edge {src} -> {dst} has illegal type {kind}")
            }
            Violation::DanglingEdge { src, dst } => write!(f, "edge {src} -> {dst} references a missing node"),
            Violation::HierarchyViolation {
                src,
                dst,
                src_kind,
                dst_kind,
            } => {
                write!(f, "{src} ({src_kind}) may not contain {dst} ({dst_kind})")
            }
            Violation::MissingAttribute { node, attribute } => write!(f, "{node} is missing {attribute}"),
            Violation::InvalidAttribute { node, attribute, value } => {
                write!(f, "{node} has invalid {attribute}={value}")
            }
            Violation::IsolatedNode { node } => write!(f, "{node} is isolated"),
            Violation::SwitchWithoutPort { node } => write!(f, "switch {node} has no ports"),
        }
    }
}

/// Returns every invariant the graph breaks; empty means safe.
pub fn check_safety_cp(graph: &CpGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let multi_node = graph.node_count() > 1;
    for (name, node) in graph.nodes() {
        if !node.kind.is_known() {
            out.push(Violation::IllegalNodeType {
                node: name.to_string(),
                kind: node.kind.as_str().to_string(),
            });
        }
        if node.kind == NodeKind::Port {
            match node.attrs.get(CAPACITY_ATTR) {
                None => out.push(Violation::MissingAttribute {
                    node: name.to_string(),
                    attribute: CAPACITY_ATTR.to_string(),
                }),
                Some(AttrValue::Int(v)) if *v > 0 => {}
                Some(other) => out.push(Violation::InvalidAttribute {
                    node: name.to_string(),
                    attribute: CAPACITY_ATTR.to_string(),
                    value: other.to_string(),
                }),
            }
        }
        if node.kind == NodeKind::PacketSwitch
            && !graph
                .children(name)
                .any(|c| graph.node(c).is_some_and(|n| n.kind == NodeKind::Port))
        {
            out.push(Violation::SwitchWithoutPort { node: name.to_string() });
        }
        if multi_node && graph.degree(name) == 0 {
            out.push(Violation::IsolatedNode { node: name.to_string() });
        }
    }
    for edge in graph.edges() {
        let (Some(src), Some(dst)) = (graph.node(&edge.src), graph.node(&edge.dst)) else {
            out.push(Violation::DanglingEdge {
                src: edge.src.clone(),
                dst: edge.dst.clone(),
            });
            continue;
        };
        match &edge.kind {
            EdgeKind::Contains => {
                if src.kind.is_known() && dst.kind.is_known() && !may_contain(&src.kind, &dst.kind) {
                    out.push(Violation::HierarchyViolation {
                        src: edge.src.clone(),
                        dst: edge.dst.clone(),
                        src_kind: src.kind.as_str().to_string(),
                        dst_kind: dst.kind.as_str().to_string(),
                    });
                }
            }
            EdgeKind::Control => {}
            EdgeKind::Unknown(kind) => out.push(Violation::IllegalEdgeType {
                src: edge.src.clone(),
                dst: edge.dst.clone(),
                kind: kind.clone(),
            }),
        }
    }
    out.sort();
    out
}

pub fn is_safe(graph: &CpGraph) -> bool {
    check_safety_cp(graph).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::graph::Node;

    fn base() -> CpGraph {
        let mut g = CpGraph::new();
        g.insert_node("agg", Node::new(NodeKind::AggBlock));
        g.insert_node("sw", Node::new(NodeKind::PacketSwitch));
        g.insert_node(
            "p",
            Node::new(NodeKind::Port).with_attr(CAPACITY_ATTR, AttrValue::Int(5)),
        );
        g.insert_edge("agg", "sw", EdgeKind::Contains);
        g.insert_edge("sw", "p", EdgeKind::Contains);
        g
    }

    #[test]
    fn clean_graph_is_safe() {
        assert!(is_safe(&base()));
    }

    #[test]
    fn each_violation_kind_is_reported() {
        let mut g = base();
        g.insert_node("lonely", Node::new(NodeKind::Rack));
        assert!(matches!(check_safety_cp(&g)[..], [Violation::IsolatedNode { .. }]));

        let mut g = base();
        g.node_mut("p").unwrap().attrs.clear();
        assert!(matches!(check_safety_cp(&g)[..], [Violation::MissingAttribute { .. }]));

        let mut g = base();
        g.node_mut("p")
            .unwrap()
            .attrs
            .insert(CAPACITY_ATTR.into(), AttrValue::Int(0));
        assert!(matches!(check_safety_cp(&g)[..], [Violation::InvalidAttribute { .. }]));

        let mut g = base();
        g.remove_node("p");
        assert!(matches!(check_safety_cp(&g)[..], [Violation::SwitchWithoutPort { .. }]));

        let mut g = base();
        g.insert_edge("p", "agg", EdgeKind::Contains);
        assert!(matches!(
            check_safety_cp(&g)[..],
            [Violation::HierarchyViolation { .. }]
        ));

        let mut g = base();
        g.insert_edge("agg", "ghost", EdgeKind::Contains);
        assert!(matches!(check_safety_cp(&g)[..], [Violation::DanglingEdge { .. }]));

        let mut g = base();
        g.insert_edge("agg", "p", EdgeKind::Unknown("RK_LIKES".into()));
        assert!(matches!(check_safety_cp(&g)[..], [Violation::IllegalEdgeType { .. }]));

        let mut g = base();
        g.insert_node("x", Node::new(NodeKind::Unknown("EK_TOASTER".into())));
        g.insert_edge("x", "agg", EdgeKind::Control);
        assert!(matches!(check_safety_cp(&g)[..], [Violation::IllegalNodeType { .. }]));
    }
}

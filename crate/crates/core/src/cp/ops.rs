//! Basic graph operations: add, count, update, remove, list and rank.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::graph::{may_contain, AttrValue, CpGraph, EdgeKind, Node, NodeKind};
use crate::model::{ActionSpec, App, StateDigest};
use crate::transition::{expect_arity, ActionError, TransitionSystem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEntry {
    pub name: String,
    pub capacity: i64,
}

/// Output of an operation. Structural operations yield the digest of the
/// resulting graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum CpResult {
    Scalar(i64),
    NameList(Vec<String>),
    RankedList(Vec<RankEntry>),
    Graph(StateDigest),
}

impl CpResult {
    pub fn kind_name(&self) -> &'static str {
        match self {
            CpResult::Scalar(_) => "scalar",
            CpResult::NameList(_) => "name-list",
            CpResult::RankedList(_) => "ranked-list",
            CpResult::Graph(_) => "graph",
        }
    }
}

/// Kind-aware comparison; graphs compare by canonical digest.
pub fn compare_results(a: &CpResult, b: &CpResult) -> bool {
    a == b
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CpOpError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` already exists")]
    DuplicateName(String),
    #[error("hierarchy violation: {0}")]
    HierarchyViolation(String),
    #[error("invalid operand: {0}")]
    InvalidOperand(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CpOp {
    Add {
        name: String,
        kind: NodeKind,
        parent: String,
        attrs: Vec<(String, AttrValue)>,
    },
    Count {
        kind: NodeKind,
        node: String,
    },
    Update {
        node: String,
        attr: String,
        value: AttrValue,
    },
    Remove {
        node: String,
    },
    List {
        node: String,
    },
    Rank {
        node: String,
    },
}

pub const OP_NAMES: [&str; 6] = ["add", "count", "update", "remove", "list", "rank"];

impl CpOp {
    pub fn parse(action: &ActionSpec) -> Result<Self, ActionError> {
        let o = &action.operands;
        Ok(match action.name.as_str() {
            "add" => {
                if !(2..=4).contains(&o.len()) {
                    return Err(ActionError::ArityMismatch {
                        name: action.name.clone(),
                        expected: "2 to 4".into(),
                        got: o.len(),
                    });
                }
                // Short form `add(name, parent)` takes the type from the name.
                if o.len() == 2 {
                    let kind = infer_kind(&o[0])
                        .ok_or_else(|| ActionError::Rejected(format!("cannot infer a node type from `{}`", o[0])))?;
                    return Ok(CpOp::Add {
                        name: o[0].clone(),
                        kind,
                        parent: o[1].clone(),
                        attrs: Vec::new(),
                    });
                }
                let attrs = match o.get(3) {
                    Some(raw) => parse_attrs(raw).map_err(|e| ActionError::Rejected(e.to_string()))?,
                    None => Vec::new(),
                };
                CpOp::Add {
                    name: o[0].clone(),
                    kind: o[1].parse().expect("infallible"),
                    parent: o[2].clone(),
                    attrs,
                }
            }
            "count" => {
                expect_arity(action, 2)?;
                CpOp::Count {
                    kind: o[0].parse().expect("infallible"),
                    node: o[1].clone(),
                }
            }
            "update" => {
                expect_arity(action, 3)?;
                let value = o[2]
                    .trim()
                    .parse::<i64>()
                    .map_err(|_| ActionError::Rejected(format!("update value `{}` is not an integer", o[2])))?;
                CpOp::Update {
                    node: o[0].clone(),
                    attr: o[1].clone(),
                    value: AttrValue::Int(value),
                }
            }
            "remove" => {
                expect_arity(action, 1)?;
                CpOp::Remove { node: o[0].clone() }
            }
            "list" => {
                expect_arity(action, 1)?;
                CpOp::List { node: o[0].clone() }
            }
            "rank" => {
                expect_arity(action, 1)?;
                CpOp::Rank { node: o[0].clone() }
            }
            other => return Err(ActionError::UnknownAction(other.to_string())),
        })
    }

    pub fn is_read(&self) -> bool {
        matches!(self, CpOp::Count { .. } | CpOp::List { .. } | CpOp::Rank { .. })
    }
}

/// Finds an embedded kind token such as `EK_PORT` in `new_EK_PORT_65`.
pub fn infer_kind(name: &str) -> Option<NodeKind> {
    let at = name.find("EK_")?;
    let rest = &name[at..];
    NodeKind::KNOWN
        .iter()
        .filter(|k| rest.starts_with(k.as_str()))
        .max_by_key(|k| k.as_str().len())
        .cloned()
}

/// Parses `k=v,k=v` (also accepts `;` as a separator).
pub fn parse_attrs(raw: &str) -> Result<Vec<(String, AttrValue)>, CpOpError> {
    raw.split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CpOpError::InvalidOperand(format!("attribute `{kv}` is not key=value")))?;
            Ok((k.trim().to_string(), AttrValue::parse(v.trim())))
        })
        .collect()
}

fn require<'a>(g: &'a CpGraph, name: &str) -> Result<&'a Node, CpOpError> {
    g.node(name).ok_or_else(|| CpOpError::UnknownNode(name.to_string()))
}

/// Nodes deleted by removing `root`: the root plus every descendant whose
/// containing parents are all deleted as well.
pub fn removal_set(g: &CpGraph, root: &str) -> BTreeSet<String> {
    let mut gone = BTreeSet::from([root.to_string()]);
    let mut frontier: Vec<String> = vec![root.to_string()];
    while let Some(n) = frontier.pop() {
        for child in g.children(&n) {
            if gone.contains(child) {
                continue;
            }
            if g.parents(child).iter().all(|p| gone.contains(p)) {
                gone.insert(child.to_string());
                frontier.push(child.to_string());
            }
        }
    }
    gone
}

/// Checks that deleting `gone` leaves no isolated node and no portless switch.
pub fn removal_problem(g: &CpGraph, gone: &BTreeSet<String>) -> Option<String> {
    let mut neighbours = BTreeSet::new();
    for n in gone {
        for e in g.out_edges(n) {
            neighbours.insert(e.dst.clone());
        }
        for e in g.in_edges(n) {
            neighbours.insert(e.src.clone());
        }
    }
    let remaining_nodes = g.node_count() - gone.len();
    for nb in neighbours.iter().filter(|n| !gone.contains(*n)) {
        let Some(node) = g.node(nb) else { continue };
        let survives =
            g.out_edges(nb).any(|e| !gone.contains(&e.dst)) || g.in_edges(nb).any(|e| !gone.contains(&e.src));
        if !survives && remaining_nodes > 1 {
            return Some(format!("removal would isolate `{nb}`"));
        }
        if node.kind == NodeKind::PacketSwitch
            && !g
                .children(nb)
                .any(|c| !gone.contains(c) && g.node(c).is_some_and(|n| n.kind == NodeKind::Port))
        {
            return Some(format!("removal would leave switch `{nb}` without ports"));
        }
    }
    None
}

/// Children of `node` ranked by capacity, highest first, ties by name.
pub fn rank_children(g: &CpGraph, node: &str) -> Vec<RankEntry> {
    let mut ranked: Vec<RankEntry> = g
        .children(node)
        .map(|c| RankEntry {
            name: c.to_string(),
            capacity: g.capacity(c),
        })
        .collect();
    ranked.sort_by(|a, b| b.capacity.cmp(&a.capacity).then_with(|| a.name.cmp(&b.name)));
    ranked
}

/// Applies `op` in place. On error the graph is unchanged.
pub fn apply_in_place(g: &mut CpGraph, op: &CpOp) -> Result<CpResult, CpOpError> {
    match op {
        CpOp::Add {
            name,
            kind,
            parent,
            attrs,
        } => {
            if g.contains_node(name) {
                return Err(CpOpError::DuplicateName(name.clone()));
            }
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(CpOpError::InvalidOperand(format!("invalid node name `{name}`")));
            }
            let parent_kind = require(g, parent)?.kind.clone();
            if !kind.is_known() {
                return Err(CpOpError::HierarchyViolation(format!("unknown node type `{kind}`")));
            }
            if !may_contain(&parent_kind, kind) {
                return Err(CpOpError::HierarchyViolation(format!(
                    "{parent_kind} may not contain {kind}"
                )));
            }
            let mut node = Node::new(kind.clone());
            for (k, v) in attrs {
                node.attrs.insert(k.clone(), v.clone());
            }
            g.insert_node(name.clone(), node);
            g.insert_edge(parent.clone(), name.clone(), EdgeKind::Contains);
            Ok(CpResult::Graph(g.digest()))
        }
        CpOp::Count { kind, node } => {
            require(g, node)?;
            let n = g
                .descendants(node)
                .iter()
                .filter(|d| g.node(d).is_some_and(|x| &x.kind == kind))
                .count();
            Ok(CpResult::Scalar(n as i64))
        }
        CpOp::Update { node, attr, value } => {
            require(g, node)?;
            if attr.is_empty() {
                return Err(CpOpError::InvalidOperand("empty attribute name".into()));
            }
            g.node_mut(node)
                .expect("checked above")
                .attrs
                .insert(attr.clone(), value.clone());
            Ok(CpResult::Graph(g.digest()))
        }
        CpOp::Remove { node } => {
            require(g, node)?;
            let gone = removal_set(g, node);
            if let Some(problem) = removal_problem(g, &gone) {
                return Err(CpOpError::HierarchyViolation(problem));
            }
            for n in &gone {
                g.remove_node(n);
            }
            Ok(CpResult::Graph(g.digest()))
        }
        CpOp::List { node } => {
            require(g, node)?;
            Ok(CpResult::NameList(g.children(node).map(str::to_string).collect()))
        }
        CpOp::Rank { node } => {
            require(g, node)?;
            Ok(CpResult::RankedList(rank_children(g, node)))
        }
    }
}

/// Value-semantics wrapper: returns the next graph and the operation result.
pub fn apply_basic_op(g: &CpGraph, op: &CpOp) -> Result<(CpGraph, CpResult), CpOpError> {
    let mut next = g.clone();
    let result = apply_in_place(&mut next, op)?;
    Ok((next, result))
}

/// Runs a program, returning the final graph and the last result.
pub fn run_program(
    g: &CpGraph,
    program: &[ActionSpec],
) -> Result<(CpGraph, Option<CpResult>), crate::transition::ComposeError> {
    let mut state = g.clone();
    let mut last = None;
    for (index, action) in program.iter().enumerate() {
        let err = |source| crate::transition::ComposeError {
            index,
            action: action.clone(),
            source,
        };
        let op = CpOp::parse(action).map_err(err)?;
        last = Some(apply_in_place(&mut state, &op).map_err(|e| err(ActionError::Rejected(e.to_string())))?);
    }
    Ok((state, last))
}

impl TransitionSystem for CpGraph {
    fn app(&self) -> App {
        App::Cp
    }

    fn apply(&mut self, action: &ActionSpec) -> Result<(), ActionError> {
        let op = CpOp::parse(action)?;
        apply_in_place(self, &op)
            .map(|_| ())
            .map_err(|e| ActionError::Rejected(e.to_string()))
    }

    fn digest(&self) -> StateDigest {
        CpGraph::digest(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::graph::CAPACITY_ATTR;
    use crate::cp::safety::is_safe;
    use crate::cp::topology::{generate_topology, TopologySpec};

    fn small() -> CpGraph {
        generate_topology(
            &TopologySpec {
                jupiters: 1,
                super_blocks: 1,
                agg_blocks: 2,
                switches: 4,
                ports: 2,
                spine_blocks: 1,
            },
            3,
        )
    }

    fn act(name: &str, ops: &[&str]) -> ActionSpec {
        ActionSpec::new(name, ops.iter().copied())
    }

    #[test]
    fn add_respects_hierarchy() {
        let g = small();
        let ok = act(
            "add",
            &[
                "ju1.a1.m1.s1c1.p9",
                "EK_PORT",
                "ju1.a1.m1.s1c1",
                "physical_capacity_bps=5",
            ],
        );
        let (g2, res) = run_program(&g, &[ok]).unwrap();
        assert!(matches!(res, Some(CpResult::Graph(_))));
        assert!(is_safe(&g2));

        let bad = act("add", &["x", "EK_PORT", "ju1.a1", ""]);
        let err = run_program(&g, &[bad]).unwrap_err();
        assert!(err.source.to_string().contains("hierarchy"));

        let dup = act("add", &["ju1.a1", "EK_SUPER_BLOCK", "ju1"]);
        assert!(run_program(&g, &[dup]).is_err());
    }

    #[test]
    fn short_add_infers_type_and_counts_up() {
        let g = small();
        let sw = "ju1.a1.m1.s1c1";
        let (_, before) = run_program(&g, &[act("count", &["EK_PORT", sw])]).unwrap();
        let (_, after) = run_program(
            &g,
            &[act("add", &["new_EK_PORT_65", sw]), act("count", &["EK_PORT", sw])],
        )
        .unwrap();
        let (Some(CpResult::Scalar(b)), Some(CpResult::Scalar(a))) = (before, after) else {
            panic!()
        };
        assert_eq!(a, b + 1);
        assert_eq!(infer_kind("x_EK_PACKET_SWITCH_1"), Some(NodeKind::PacketSwitch));
        assert_eq!(infer_kind("plain"), None);
    }

    #[test]
    fn remove_cascades_to_orphans_only() {
        let g = small();
        let (g2, _) = run_program(&g, &[act("remove", &["ju1.a1.m1.s1c1"])]).unwrap();
        assert!(!g2.contains_node("ju1.a1.m1.s1c1.p1"));
        assert!(g2.contains_node("ju1.a1.m1.s1"));
        assert!(is_safe(&g2));
    }

    #[test]
    fn remove_rejects_portless_switch() {
        let g = small();
        let p = act("remove", &["ju1.a1.m1.s1c1.p1"]);
        let (g2, _) = run_program(&g, &[p]).unwrap();
        let err = run_program(&g2, &[act("remove", &["ju1.a1.m1.s1c1.p2"])]).unwrap_err();
        assert!(err.source.to_string().contains("without ports"));
    }

    #[test]
    fn reads_leave_digest_unchanged() {
        let g = small();
        for a in [
            act("count", &["EK_PORT", "ju1"]),
            act("list", &["ju1.a1"]),
            act("rank", &["ju1.a1.m1"]),
        ] {
            let (g2, _) = run_program(&g, &[a]).unwrap();
            assert_eq!(g2.digest(), g.digest());
        }
    }

    #[test]
    fn count_and_rank_values() {
        let g = small();
        let (_, r) = run_program(&g, &[act("count", &["EK_PORT", "ju1"])]).unwrap();
        // 2 agg * 4 sw * 2 ports + 4 spine sw * 2 ports
        assert_eq!(r, Some(CpResult::Scalar(24)));
        let (_, r) = run_program(&g, &[act("rank", &["ju1.a1.m1"])]).unwrap();
        let Some(CpResult::RankedList(list)) = r else { panic!() };
        assert_eq!(list.len(), 4);
        assert!(list.windows(2).all(|w| w[0].capacity >= w[1].capacity));
    }

    #[test]
    fn update_changes_capacity() {
        let g = small();
        let (g2, _) = run_program(&g, &[act("update", &["ju1.a1.m1.s1c1.p1", CAPACITY_ATTR, "7"])]).unwrap();
        assert_eq!(g2.node("ju1.a1.m1.s1c1.p1").unwrap().capacity(), Some(7));
    }

    #[test]
    fn bad_actions_are_rejected() {
        let g = small();
        assert!(matches!(
            run_program(&g, &[act("explode", &[])]).unwrap_err().source,
            ActionError::UnknownAction(_)
        ));
        assert!(matches!(
            run_program(&g, &[act("list", &[])]).unwrap_err().source,
            ActionError::ArityMismatch { .. }
        ));
        assert!(run_program(&g, &[act("list", &["nowhere"])]).is_err());
        assert!(run_program(&g, &[act("update", &["ju1", "x", "fast"])]).is_err());
    }
}

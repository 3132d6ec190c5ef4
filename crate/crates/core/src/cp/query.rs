//! Capacity-planning query generation.

use rand::seq::SliceRandom;
use rand::Rng;

use super::graph::{CpGraph, NodeKind, CAPACITY_ATTR};
use super::ops::{removal_problem, removal_set, run_program};
use super::safety::is_safe;
use super::topology::PORT_SPEEDS_BPS;
use crate::model::{ActionSpec, App, GroundTruth, QuerySpec, StateDigest};
use crate::seed;

pub const LEVEL1_LABELS: [&str; 4] = ["remove", "rank", "list", "add"];
pub const LEVEL2_LABELS: [&str; 3] = ["remove-count", "remove-list", "remove-rank"];
pub const LEVEL3_LABELS: [&str; 3] = ["add-count", "add-list", "add-rank"];

pub fn labels_for_level(level: u8) -> &'static [&'static str] {
    match level {
        1 => &LEVEL1_LABELS,
        2 => &LEVEL2_LABELS,
        3 => &LEVEL3_LABELS,
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CpQueryError {
    #[error("no eligible operand for `{0}` in this topology")]
    NoEligibleOperand(String),
    #[error("unsupported level {0}")]
    BadLevel(u8),
    #[error("generated program is not executable: {0}")]
    Internal(String),
}

/// Child types a generated `add` may introduce, with their legal parents.
/// Bare packet switches are excluded because a switch without ports is unsafe.
const ADDABLE: [(NodeKind, &[NodeKind]); 6] = [
    (NodeKind::Port, &[NodeKind::PacketSwitch]),
    (NodeKind::AggBlock, &[NodeKind::SuperBlock, NodeKind::SpineBlock]),
    (NodeKind::SuperBlock, &[NodeKind::Jupiter]),
    (NodeKind::SpineBlock, &[NodeKind::Jupiter]),
    (NodeKind::Chassis, &[NodeKind::Rack]),
    (NodeKind::ControlPoint, &[NodeKind::ControlDomain, NodeKind::Chassis]),
];

fn nodes_of<'a>(g: &'a CpGraph, kinds: &'a [NodeKind]) -> Vec<&'a str> {
    g.nodes()
        .filter(|(_, n)| kinds.contains(&n.kind))
        .map(|(name, _)| name)
        .collect()
}

fn removable(g: &CpGraph, name: &str) -> bool {
    removal_problem(g, &removal_set(g, name)).is_none()
}

/// Structural parent used by composite queries: a port's switch, or a
/// switch's aggregation/spine block.
fn structural_parent(g: &CpGraph, name: &str) -> Option<String> {
    let want: &[NodeKind] = match g.node(name)?.kind {
        NodeKind::Port => &[NodeKind::PacketSwitch],
        NodeKind::PacketSwitch => &[NodeKind::AggBlock, NodeKind::SpineBlock],
        _ => return None,
    };
    g.parents(name)
        .into_iter()
        .find(|p| g.node(p).is_some_and(|n| want.contains(&n.kind)))
}

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str], label: &str) -> Result<&'a str, CpQueryError> {
    pool.choose(rng)
        .copied()
        .ok_or_else(|| CpQueryError::NoEligibleOperand(label.to_string()))
}

struct PlannedAdd {
    action: ActionSpec,
    parent: String,
    kind: NodeKind,
    clause: String,
}

fn plan_add<R: Rng>(g: &CpGraph, rng: &mut R, label: &str) -> Result<PlannedAdd, CpQueryError> {
    let options: Vec<(NodeKind, Vec<&str>)> = ADDABLE
        .iter()
        .map(|(kind, parents)| (kind.clone(), nodes_of(g, parents)))
        .filter(|(_, parents)| !parents.is_empty())
        .collect();
    let (kind, parents) = options
        .choose(rng)
        .ok_or_else(|| CpQueryError::NoEligibleOperand(label.to_string()))?;
    let parent = pick(rng, parents, label)?.to_string();
    let name = loop {
        let candidate = format!("new_{}_{}", kind.short().to_ascii_lowercase(), rng.gen_range(1..=9999));
        if !g.contains_node(&candidate) {
            break candidate;
        }
    };
    let (attrs, clause) = if *kind == NodeKind::Port {
        let speed = *PORT_SPEEDS_BPS.choose(rng).expect("nonempty");
        (
            format!("{CAPACITY_ATTR}={speed}"),
            format!(" with {CAPACITY_ATTR}={speed}"),
        )
    } else {
        (String::new(), String::new())
    };
    let mut operands = vec![name.clone(), kind.as_str().to_string(), parent.clone()];
    if !attrs.is_empty() {
        operands.push(attrs);
    }
    Ok(PlannedAdd {
        action: ActionSpec::new("add", operands),
        clause: format!(
            "Add a new {} with name {name} and type={}{clause} to the node {parent}.",
            kind.short().to_ascii_lowercase().replace('_', " "),
            kind.as_str()
        ),
        parent,
        kind: kind.clone(),
    })
}

fn read_clause(kind: &str, node: &str, count_kind: &NodeKind, g: &CpGraph) -> (ActionSpec, String) {
    let node_kind = g.node(node).map(|n| n.kind.short().to_string()).unwrap_or_default();
    match kind {
        "count" => (
            ActionSpec::new("count", [count_kind.as_str(), node]),
            format!(
                "Count the number of {} nodes contained in {node}. Return only the count.",
                count_kind.as_str()
            ),
        ),
        "list" => (
            ActionSpec::new("list", [node]),
            format!("List all the direct child nodes of {node}. Return a list of child node names."),
        ),
        _ => (
            ActionSpec::new("rank", [node]),
            format!(
                "Rank all child nodes of {node_kind} {node} based on the total {CAPACITY_ATTR} of the \
                 ports they contain. Return a list of (name, capacity) pairs sorted from highest to \
                 lowest capacity."
            ),
        ),
    }
}

/// Removal targets of a graph, computed once and shared by every query
/// generated against it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpCandidates {
    removable: Vec<String>,
    removable_with_parent: Vec<String>,
    base_digest: StateDigest,
    base_safe: bool,
}

impl CpCandidates {
    pub fn new(graph: &CpGraph) -> Self {
        let removable: Vec<String> = nodes_of(graph, &[NodeKind::PacketSwitch])
            .into_iter()
            .chain(nodes_of(graph, &[NodeKind::Port]))
            .filter(|n| removable(graph, n))
            .map(str::to_string)
            .collect();
        let removable_with_parent = removable
            .iter()
            .filter(|n| structural_parent(graph, n).is_some())
            .cloned()
            .collect();
        Self {
            removable,
            removable_with_parent,
            base_digest: graph.digest(),
            base_safe: is_safe(graph),
        }
    }
}

/// Produces one query and its executable ground truth. The same graph,
/// level and seed always yield the same result.
pub fn generate_cp_query(
    graph: &CpGraph,
    level: u8,
    query_seed: u64,
) -> Result<(QuerySpec, GroundTruth), CpQueryError> {
    generate_cp_query_with(graph, &CpCandidates::new(graph), level, query_seed)
}

/// [`generate_cp_query`] with precomputed candidates for `graph`.
pub fn generate_cp_query_with(
    graph: &CpGraph,
    candidates: &CpCandidates,
    level: u8,
    query_seed: u64,
) -> Result<(QuerySpec, GroundTruth), CpQueryError> {
    let labels = labels_for_level(level);
    if labels.is_empty() {
        return Err(CpQueryError::BadLevel(level));
    }
    let mut rng = seed::rng(query_seed);
    let label = *labels.choose(&mut rng).expect("nonempty");
    let (program, prompt) = match label {
        "remove" => {
            let pool: Vec<&str> = candidates.removable.iter().map(String::as_str).collect();
            let target = pick(&mut rng, &pool, label)?;
            (
                vec![ActionSpec::new("remove", [target])],
                format!("Remove {target} from the graph. Return the updated graph."),
            )
        }
        "rank" | "list" => {
            let pool: Vec<&str> = graph
                .nodes()
                .filter(|(name, n)| {
                    n.kind != NodeKind::Port && graph.children(name).nth(usize::from(label == "rank")).is_some()
                })
                .map(|(name, _)| name)
                .collect();
            let target = pick(&mut rng, &pool, label)?;
            let (a, text) = read_clause(label, target, &NodeKind::Port, graph);
            (vec![a], text)
        }
        "add" => {
            let add = plan_add(graph, &mut rng, label)?;
            (vec![add.action], format!("{} Return the updated graph.", add.clause))
        }
        composite => {
            let (first, read) = composite.split_once('-').expect("composite label");
            let (mutation, parent, kind, clause) = if first == "remove" {
                let pool: Vec<&str> = candidates.removable_with_parent.iter().map(String::as_str).collect();
                let target = pick(&mut rng, &pool, label)?;
                let parent = structural_parent(graph, target).expect("filtered");
                let kind = graph.node(target).expect("exists").kind.clone();
                (
                    ActionSpec::new("remove", [target]),
                    parent,
                    kind,
                    format!("Remove {target} from the graph."),
                )
            } else {
                let add = plan_add(graph, &mut rng, label)?;
                (add.action, add.parent, add.kind, add.clause)
            };
            let (a, text) = read_clause(read, &parent, &kind, graph);
            (vec![mutation, a], format!("{clause} Then: {text}"))
        }
    };

    let (final_graph, _) = run_program(graph, &program).map_err(|e| CpQueryError::Internal(e.to_string()))?;
    let read_only = program
        .iter()
        .all(|a| matches!(a.name.as_str(), "count" | "list" | "rank"));
    let (safe, target) = if read_only {
        (candidates.base_safe, candidates.base_digest.clone())
    } else {
        (is_safe(&final_graph), final_graph.digest())
    };
    if !safe {
        return Err(CpQueryError::Internal(format!(
            "{label} program leaves the graph unsafe"
        )));
    }
    let query = QuerySpec {
        id: QuerySpec::make_id(App::Cp, level, query_seed),
        app: App::Cp,
        level,
        action_label: label.to_string(),
        prompt_text: prompt,
        seed: query_seed,
    };
    Ok((query, GroundTruth::action_program(program, target)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::topology::{generate_topology, TopologySpec};
    use crate::transition::compose_actions;

    #[test]
    fn every_level_generates_executable_programs() {
        let g = generate_topology(&TopologySpec::desk_scale(), 5);
        for level in 1..=3 {
            for s in 0..40u64 {
                let (q, t) = generate_cp_query(&g, level, seed::query_seed(11, s)).unwrap();
                assert!(labels_for_level(level).contains(&q.action_label.as_str()));
                t.validate().unwrap();
                let after = compose_actions(&g, &t.program).unwrap();
                assert_eq!(after.digest(), t.target_digest);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let g = generate_topology(&TopologySpec::desk_scale(), 5);
        let a = generate_cp_query(&g, 3, 42).unwrap();
        let b = generate_cp_query(&g, 3, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_level_is_rejected() {
        let g = generate_topology(&TopologySpec::desk_scale(), 5);
        assert_eq!(generate_cp_query(&g, 4, 1), Err(CpQueryError::BadLevel(4)));
    }
}

//! Synthetic topology generator.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::graph::{AttrValue, CpGraph, EdgeKind, Node, NodeKind, CAPACITY_ATTR, SWITCH_LOC_ATTR};
use crate::seed;

/// Port speeds drawn for generated ports, in bits per second.
pub const PORT_SPEEDS_BPS: [i64; 5] = [
    10_000_000_000,
    40_000_000_000,
    100_000_000_000,
    200_000_000_000,
    400_000_000_000,
];

/// Shape of a generated topology. Counts are per parent: `agg_blocks` per
/// super block, `switches` per aggregation or spine block, `ports` per switch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub jupiters: u32,
    pub super_blocks: u32,
    pub agg_blocks: u32,
    pub switches: u32,
    pub ports: u32,
    pub spine_blocks: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("topology parameter `{field}` must be between 1 and {max}, got {value}")]
pub struct TopologySpecError {
    pub field: &'static str,
    pub value: u32,
    pub max: u32,
}

impl TopologySpec {
    /// Laptop-sized default (a few hundred nodes).
    pub fn desk_scale() -> Self {
        Self {
            jupiters: 1,
            super_blocks: 4,
            agg_blocks: 4,
            switches: 4,
            ports: 4,
            spine_blocks: 2,
        }
    }

    pub fn validate(&self) -> Result<(), TopologySpecError> {
        let checks = [
            ("jupiters", self.jupiters, 8),
            ("super_blocks", self.super_blocks, 64),
            ("agg_blocks", self.agg_blocks, 64),
            ("switches", self.switches, 64),
            ("ports", self.ports, 128),
        ];
        for (field, value, max) in checks {
            if value == 0 || value > max {
                return Err(TopologySpecError { field, value, max });
            }
        }
        if self.spine_blocks > 64 {
            return Err(TopologySpecError {
                field: "spine_blocks",
                value: self.spine_blocks,
                max: 64,
            });
        }
        Ok(())
    }
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self::desk_scale()
    }
}

/// Builds a hierarchy-consistent topology. Port speeds are the only random
/// element; the structure is fixed by `spec`.
pub fn generate_topology(spec: &TopologySpec, topo_seed: u64) -> CpGraph {
    let mut rng = seed::rng(topo_seed);
    let mut g = CpGraph::new();
    let mut add_ports = |g: &mut CpGraph, switch: &str| {
        for p in 1..=spec.ports {
            let port = format!("{switch}.p{p}");
            let speed = *PORT_SPEEDS_BPS.choose(&mut rng).expect("nonempty");
            g.insert_node(
                port.clone(),
                Node::new(NodeKind::Port).with_attr(CAPACITY_ATTR, AttrValue::Int(speed)),
            );
            g.insert_edge(switch, port, EdgeKind::Contains);
        }
    };
    for j in 1..=spec.jupiters {
        let ju = format!("ju{j}");
        g.insert_node(ju.clone(), Node::new(NodeKind::Jupiter));
        for a in 1..=spec.super_blocks {
            let sb = format!("{ju}.a{a}");
            g.insert_node(sb.clone(), Node::new(NodeKind::SuperBlock));
            g.insert_edge(&ju, &sb, EdgeKind::Contains);
            let dom = format!("{sb}.dom");
            g.insert_node(dom.clone(), Node::new(NodeKind::ControlDomain));
            for m in 1..=spec.agg_blocks {
                let agg = format!("{sb}.m{m}");
                g.insert_node(agg.clone(), Node::new(NodeKind::AggBlock));
                g.insert_edge(&sb, &agg, EdgeKind::Contains);
                let rack = format!("{agg}.rack");
                g.insert_node(rack.clone(), Node::new(NodeKind::Rack));
                let cp = format!("{agg}.cp");
                g.insert_node(cp.clone(), Node::new(NodeKind::ControlPoint));
                g.insert_edge(&dom, &cp, EdgeKind::Contains);
                for i in 0..spec.switches {
                    let (x, y) = (i / 2 + 1, i % 2 + 1);
                    let chassis = format!("{agg}.s{x}");
                    if y == 1 {
                        g.insert_node(chassis.clone(), Node::new(NodeKind::Chassis));
                        g.insert_edge(&rack, &chassis, EdgeKind::Contains);
                    }
                    let sw = format!("{agg}.s{x}c{y}");
                    g.insert_node(
                        sw.clone(),
                        Node::new(NodeKind::PacketSwitch)
                            .with_attr(SWITCH_LOC_ATTR, AttrValue::Text(format!("a{a}.m{m}.s{x}c{y}"))),
                    );
                    g.insert_edge(&agg, &sw, EdgeKind::Contains);
                    g.insert_edge(&chassis, &sw, EdgeKind::Contains);
                    g.insert_edge(&cp, &sw, EdgeKind::Contains);
                    g.insert_edge(&cp, &sw, EdgeKind::Control);
                    add_ports(&mut g, &sw);
                }
            }
        }
        for s in 1..=spec.spine_blocks {
            let spine = format!("{ju}.s{s}");
            g.insert_node(spine.clone(), Node::new(NodeKind::SpineBlock));
            g.insert_edge(&ju, &spine, EdgeKind::Contains);
            for c in 1..=spec.switches {
                let sw = format!("{spine}.c{c}");
                g.insert_node(
                    sw.clone(),
                    Node::new(NodeKind::PacketSwitch).with_attr(SWITCH_LOC_ATTR, AttrValue::Text(format!("s{s}.c{c}"))),
                );
                g.insert_edge(&spine, &sw, EdgeKind::Contains);
                add_ports(&mut g, &sw);
            }
        }
    }
    g
}

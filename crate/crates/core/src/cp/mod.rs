//! Datacenter capacity planning: topology graph, basic operations, query
//! generation and structural safety.

pub mod env;
pub mod graph;
pub mod ops;
pub mod query;
pub mod safety;
pub mod sft;
pub mod topology;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use env::CpEnv;
pub use graph::{load_topology, AttrValue, CpGraph, EdgeKind, LoadError, Node, NodeKind};
pub use ops::{apply_basic_op, compare_results, run_program, CpOp, CpOpError, CpResult, RankEntry};
pub use query::{generate_cp_query, generate_cp_query_with, CpCandidates, CpQueryError};
pub use safety::{check_safety_cp, Violation};
pub use sft::export_sft_records;
pub use topology::{generate_topology, TopologySpec};

/// Where an episode's topology comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum CpSetup {
    Synthetic { spec: TopologySpec, topology_seed: u64 },
    Fixture { path: PathBuf },
}

impl CpSetup {
    pub fn build(&self) -> Result<CpGraph, LoadError> {
        match self {
            CpSetup::Synthetic { spec, topology_seed } => Ok(generate_topology(spec, *topology_seed)),
            CpSetup::Fixture { path } => load_topology(path),
        }
    }
}

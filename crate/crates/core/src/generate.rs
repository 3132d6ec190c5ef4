//! Batch generation, JSONL persistence and environment construction.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::config::{AppParams, BenchmarkConfig, ConfigError, EnvOptions};
use crate::cp::{generate_cp_query_with, CpCandidates, CpEnv, CpSetup};
use crate::episode::Environment;
use crate::k8spolicy::{generate_k8s_query, K8sEnv};
use crate::model::{BenchmarkItem, EnvSetup};
use crate::routing::{generate_routing_query, RoutingEnv};
use crate::seed;

const TOPOLOGY_SALT: u64 = 0x746f_706f;

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("query {index} failed: {reason}")]
    Query { index: usize, reason: String },
    #[error("topology unavailable: {0}")]
    Topology(String),
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot build environment for {query_id}: {reason}")]
pub struct EnvBuildError {
    pub query_id: String,
    pub reason: String,
}

/// Level of the `index`-th query: levels are dealt round-robin.
pub fn level_for(config: &BenchmarkConfig, index: usize) -> u8 {
    let levels: Vec<u8> = config.levels.iter().copied().collect();
    levels[index % levels.len()]
}

/// Generates `config.num_queries` items. Output depends only on the config,
/// not on thread count or scheduling.
pub fn generate_batch(config: &BenchmarkConfig) -> Result<Vec<BenchmarkItem>, GenerateError> {
    config.validate()?;
    let cp_setup = match &config.params {
        AppParams::Cp(p) => Some(match &p.topology_path {
            Some(path) => CpSetup::Fixture { path: path.clone() },
            None => CpSetup::Synthetic {
                spec: p.topology.clone(),
                topology_seed: seed::derive(config.seed, TOPOLOGY_SALT),
            },
        }),
        _ => None,
    };
    let cp_graph = match &cp_setup {
        Some(s) => Some(s.build().map_err(|e| GenerateError::Topology(e.to_string()))?),
        None => None,
    };
    let cp_candidates = cp_graph.as_ref().map(CpCandidates::new);
    let make = |index: usize| -> Result<BenchmarkItem, GenerateError> {
        let level = level_for(config, index);
        let qseed = seed::query_seed(config.seed, index as u64);
        let fail = |reason: String| GenerateError::Query { index, reason };
        match &config.params {
            AppParams::Cp(_) => {
                let graph = cp_graph.as_ref().expect("built above");
                let candidates = cp_candidates.as_ref().expect("built above");
                let (query, truth) =
                    generate_cp_query_with(graph, candidates, level, qseed).map_err(|e| fail(e.to_string()))?;
                Ok(BenchmarkItem {
                    query,
                    truth,
                    setup: EnvSetup::Cp(cp_setup.clone().expect("built above")),
                })
            }
            AppParams::Routing(p) => {
                let (query, truth, setup) = generate_routing_query(p, level, qseed).map_err(|e| fail(e.to_string()))?;
                Ok(BenchmarkItem {
                    query,
                    truth,
                    setup: EnvSetup::Routing(setup),
                })
            }
            AppParams::K8s => {
                let (query, truth, setup) = generate_k8s_query(level, qseed).map_err(|e| fail(e.to_string()))?;
                Ok(BenchmarkItem {
                    query,
                    truth,
                    setup: EnvSetup::K8s(setup),
                })
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| GenerateError::Topology(e.to_string()))?;
    pool.install(|| (0..config.num_queries).into_par_iter().map(make).collect())
}

pub fn write_jsonl<T: serde::Serialize, W: Write>(items: &[T], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Parses one value per nonblank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| JsonlError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// Live environment positioned at the item's initial (faulty) state.
pub fn build_environment(item: &BenchmarkItem, options: EnvOptions) -> Result<Box<dyn Environment>, EnvBuildError> {
    let fail = |reason: String| EnvBuildError {
        query_id: item.query.id.clone(),
        reason,
    };
    if item.setup.app() != item.query.app {
        return Err(fail(format!(
            "setup is for {} but query is {}",
            item.setup.app(),
            item.query.app
        )));
    }
    Ok(match &item.setup {
        EnvSetup::Cp(setup) => {
            let graph = setup.build().map_err(|e| fail(e.to_string()))?;
            Box::new(CpEnv::new(graph, &item.truth).map_err(|e| fail(e.to_string()))?)
        }
        EnvSetup::Routing(setup) => {
            Box::new(RoutingEnv::new(setup, &item.truth, options).map_err(|e| fail(e.to_string()))?)
        }
        EnvSetup::K8s(_) => Box::new(K8sEnv::new(&item.truth, options).map_err(|e| fail(e.to_string()))?),
    })
}

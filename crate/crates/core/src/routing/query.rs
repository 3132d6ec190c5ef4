//! Routing query generation and the monotone repair plan.

use rand::seq::SliceRandom;
use rand::Rng;

use super::command::{classify, exec_command};
use super::inject::{apply_injection, sample_injection, Family, InjectError, InjectionRecord};
use super::ping::{pingall, DEFAULT_DELAY_CEILING_MS};
use super::safety::judge_step_safety;
use super::state::NetState;
use super::RoutingSetup;
use crate::config::{RoutingParams, SafetyRule};
use crate::model::{ActionSpec, App, GroundTruth, QuerySpec};
use crate::seed;

pub const MAX_RESAMPLES: usize = 16;

pub const LEVEL1_LABELS: [&str; 5] = ["DR", "DI", "RI", "DT", "WR"];
pub const LEVEL2_LABELS: [&str; 7] = ["DR+DI", "DR+RI", "DR+DT", "DR+WR", "RI+WR", "DT+WR", "DI+DT"];
pub const LEVEL3_LABELS: [&str; 3] = ["DI+WR", "RI+DT", "DI+RI"];

pub fn labels_for_level(level: u8) -> &'static [&'static str] {
    match level {
        1 => &LEVEL1_LABELS,
        2 => &LEVEL2_LABELS,
        3 => &LEVEL3_LABELS,
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingQueryError {
    #[error("unsupported level {0}")]
    BadLevel(u8),
    #[error("invalid topology parameters: {0}")]
    BadParams(String),
    #[error("no effective, repairable injection after {0} attempts")]
    RetriesExhausted(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RepairError {
    #[error(transparent)]
    Inject(#[from] InjectError),
    #[error("no repair order restores the healthy state without an unsafe step")]
    NoSafeOrder,
}

fn try_order(
    faulty: &NetState,
    healthy: &NetState,
    records: &[&InjectionRecord],
    cleanup_from: &[InjectionRecord],
) -> Option<Vec<String>> {
    let router = faulty.router_name();
    let commands: Vec<String> = records
        .iter()
        .flat_map(|r| r.repair.iter().cloned())
        .chain(cleanup_from.iter().rev().flat_map(|r| r.cleanup.iter().cloned()))
        .collect();
    let mut state = faulty.clone();
    let mut before = pingall(&state, DEFAULT_DELAY_CEILING_MS);
    for c in &commands {
        let kind = classify(c).ok()?;
        exec_command(&mut state, &router, c).ok()?;
        let after = pingall(&state, DEFAULT_DELAY_CEILING_MS);
        if !judge_step_safety(&before, &after, kind, SafetyRule::Strict).ok()? {
            return None;
        }
        before = after;
    }
    (state.digest() == healthy.digest() && before.all_reachable()).then_some(commands)
}

/// Repair commands for `injections` applied to `healthy`: each step either
/// restores pairs or leaves a fully reachable network untouched in
/// reachability, and the last step returns the exact healthy configuration.
pub fn plan_repair(healthy: &NetState, injections: &[ActionSpec]) -> Result<Vec<String>, RepairError> {
    let mut faulty = healthy.clone();
    let records = injections
        .iter()
        .map(|a| apply_injection(&mut faulty, a))
        .collect::<Result<Vec<_>, _>>()?;
    let reverse: Vec<&InjectionRecord> = records.iter().rev().collect();
    let forward: Vec<&InjectionRecord> = records.iter().collect();
    try_order(&faulty, healthy, &reverse, &records)
        .or_else(|| try_order(&faulty, healthy, &forward, &records))
        .ok_or(RepairError::NoSafeOrder)
}

fn prompt_for(setup: &RoutingSetup) -> String {
    format!(
        "The network has one router {p}r0 connecting {s} subnets with {h} hosts each \
         ({p}h1 to {p}h{n}). Some hosts can no longer reach each other. Find the \
         misconfiguration and fix it.",
        p = setup.prefix,
        s = setup.num_switches,
        h = setup.hosts_per_subnet,
        n = setup.num_switches * setup.hosts_per_subnet,
    )
}

/// Produces one routing query with its hidden injection and topology.
pub fn generate_routing_query(
    params: &RoutingParams,
    level: u8,
    query_seed: u64,
) -> Result<(QuerySpec, GroundTruth, RoutingSetup), RoutingQueryError> {
    let labels = labels_for_level(level);
    if labels.is_empty() {
        return Err(RoutingQueryError::BadLevel(level));
    }
    if params.min_switches > params.max_switches || params.min_hosts > params.max_hosts {
        return Err(RoutingQueryError::BadParams("minimum exceeds maximum".into()));
    }
    let mut rng = seed::rng(query_seed);
    for _ in 0..MAX_RESAMPLES {
        let label = *labels.choose(&mut rng).expect("nonempty");
        let setup = RoutingSetup {
            num_switches: u32::from(rng.gen_range(params.min_switches..=params.max_switches)),
            hosts_per_subnet: u32::from(rng.gen_range(params.min_hosts..=params.max_hosts)),
            prefix: format!("p{}_", rng.gen_range(1..100u32)),
        };
        let healthy = setup.build().map_err(|e| RoutingQueryError::BadParams(e.to_string()))?;
        let mut state = healthy.clone();
        let mut actions = Vec::new();
        let mut ok = true;
        for fam in label.split('+') {
            let family: Family = fam.parse().expect("labels use known families");
            let method = rng.gen_range(1..=family.methods());
            let applied = sample_injection(&state, family, method, &mut rng)
                .and_then(|a| apply_injection(&mut state, &a).map(|_| a));
            match applied {
                Ok(a) => actions.push(a),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || pingall(&state, DEFAULT_DELAY_CEILING_MS).all_reachable() {
            continue;
        }
        // Each fault must be visible on its own, not only in combination.
        let each_effective = actions.len() == 1
            || actions.iter().all(|a| {
                let mut alone = healthy.clone();
                apply_injection(&mut alone, a).is_ok() && !pingall(&alone, DEFAULT_DELAY_CEILING_MS).all_reachable()
            });
        if !each_effective {
            continue;
        }
        if plan_repair(&healthy, &actions).is_err() {
            continue;
        }
        let query = QuerySpec {
            id: QuerySpec::make_id(App::Routing, level, query_seed),
            app: App::Routing,
            level,
            action_label: label.to_string(),
            prompt_text: prompt_for(&setup),
            seed: query_seed,
        };
        let truth = GroundTruth::recovery(actions, healthy.digest());
        return Ok((query, truth, setup));
    }
    Err(RoutingQueryError::RetriesExhausted(MAX_RESAMPLES))
}

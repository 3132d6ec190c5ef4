//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use netbench::agents::message::{AgentContext, AgentError, AgentSession};
use netbench::agents::{AdversarialAgent, Agent, AgentMessage, NoopAgent, OracleAgent, ScriptedSession};
use netbench::cp::graph::CAPACITY_ATTR;
use netbench::cp::{check_safety_cp, CpGraph, EdgeKind, Node, NodeKind, Violation};
use netbench::eval::{ci95, episode_reward};
use netbench::generate::{build_environment, generate_batch, write_jsonl};
use netbench::k8spolicy::{
    connectivity_check, default_policies, exec_kubectl, plan_policy_repair, PolicySet, ServiceGraph,
};
use netbench::routing::ping::{PingMatrix, DEFAULT_DELAY_CEILING_MS};
use netbench::routing::{apply_injection, pingall, plan_repair, RoutingSetup};
use netbench::{
    compose_actions, run_episode, ActionSpec, App, BenchmarkConfig, BenchmarkItem, EnvOptions, EpisodeOptions,
    EpisodeResult, StepKind,
};
use rand::Rng;

use common::{brute_capacity, GraphBuilder};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn batch(app: App, n: usize, seed: u64, parallelism: usize) -> Vec<BenchmarkItem> {
    let mut cfg = BenchmarkConfig::new(app).with_queries(n).with_seed(seed);
    cfg.parallelism = parallelism;
    generate_batch(&cfg).expect("generation")
}

fn episode(item: &BenchmarkItem, agent: &dyn Agent) -> EpisodeResult {
    let mut env = build_environment(item, EnvOptions::default()).expect("environment");
    run_episode(env.as_mut(), agent, item, EpisodeOptions::default())
}

fn oracle_is_perfect() -> Outcome {
    let mut notes = Vec::new();
    for app in [App::Cp, App::Routing, App::K8s] {
        let items = batch(app, 300, 0, 4);
        let results: Vec<EpisodeResult> = items.iter().map(|i| episode(i, &OracleAgent)).collect();
        let correct = results.iter().filter(|r| r.correct).count();
        let safe = results.iter().filter(|r| r.safe).count();
        notes.push(format!("{app}: {correct}/300 correct, {safe}/300 safe"));
        if correct != 300 || safe != 300 {
            let bad = results.iter().find(|r| !r.correct || !r.safe).unwrap();
            return Err(format!(
                "{} (first failure {}: {:?})",
                notes.join("; "),
                bad.query_id,
                bad.error
            ));
        }
    }
    Ok(notes.join("; "))
}

fn generation_is_reproducible() -> Outcome {
    let mut notes = Vec::new();
    for (app, n) in [(App::Cp, 5000), (App::Routing, 2250), (App::K8s, 2000)] {
        let started = Instant::now();
        let mut a = Vec::new();
        write_jsonl(&batch(app, n, 0, 1), &mut a).unwrap();
        let mut b = Vec::new();
        write_jsonl(&batch(app, n, 0, 4), &mut b).unwrap();
        if a != b {
            return Err(format!("{app}: two generations of {n} queries differ"));
        }
        notes.push(format!(
            "{app}:{n} {} bytes in {:.1}s",
            a.len(),
            started.elapsed().as_secs_f64()
        ));
    }
    Ok(notes.join("; "))
}

fn interval_widths() -> Outcome {
    let half = ci95(2500, 5000).map_err(|e| e.to_string())?.half_width();
    if (half - 0.013859).abs() > 1e-6 {
        return Err(format!("half-width at p=0.5, n=5000 is {half:.7}"));
    }
    let small = ci95(75, 150).map_err(|e| e.to_string())?.half_width();
    let ratio = small / half;
    let want = (5000.0f64 / 150.0).sqrt();
    if (ratio - want).abs() > 1e-9 {
        return Err(format!("n=150/n=5000 width ratio {ratio} != {want}"));
    }
    Ok(format!("half-width {half:.6}, ratio {ratio:.6}"))
}

fn reactive_queries_start_broken() -> Outcome {
    let mut notes = Vec::new();
    for app in [App::Routing, App::K8s] {
        let items = batch(app, 1000, 0, 4);
        let mut broken = 0;
        for item in &items {
            let env = build_environment(item, EnvOptions::default()).map_err(|e| e.to_string())?;
            let failures = match app {
                App::Routing => {
                    let EnvSetupRef::Routing(setup) = setup_of(item) else {
                        unreachable!()
                    };
                    let faulty = compose_actions(&setup.build().unwrap(), &item.truth.hidden_injection).unwrap();
                    pingall(&faulty, DEFAULT_DELAY_CEILING_MS).failures()
                }
                _ => {
                    let faulty = compose_actions(&default_policies(), &item.truth.hidden_injection).unwrap();
                    connectivity_check(&faulty, &ServiceGraph::standard()).mismatches.len()
                }
            };
            if failures >= 1 && !env.goal_reached() {
                broken += 1;
            }
        }
        notes.push(format!("{app}: {broken}/1000 with a failing check"));
        if broken != 1000 {
            return Err(notes.join("; "));
        }
    }
    Ok(notes.join("; "))
}

enum EnvSetupRef<'a> {
    Routing(&'a RoutingSetup),
    Other,
}

fn setup_of(item: &BenchmarkItem) -> EnvSetupRef<'_> {
    match &item.setup {
        netbench::EnvSetup::Routing(s) => EnvSetupRef::Routing(s),
        _ => EnvSetupRef::Other,
    }
}

fn pingall_summaries() -> Outcome {
    let setup = RoutingSetup {
        num_switches: 2,
        hosts_per_subnet: 2,
        prefix: "p29_".into(),
    };
    let mut state = setup.build().unwrap();
    apply_injection(&mut state, &ActionSpec::new("disable_interface", ["m1", "p29_r0-eth1"]))
        .map_err(|e| e.to_string())?;
    let first = pingall(&state, DEFAULT_DELAY_CEILING_MS).summary_line();
    if first != "*** Results: 60% dropped (8/20 received)" {
        return Err(format!("2x2 with one interface down: `{first}`"));
    }
    let n = 7;
    let mut reachable = vec![vec![false; n]; n];
    for (i, j) in [(0, 1), (0, 2), (1, 2), (3, 4), (5, 6)] {
        reachable[i][j] = true;
        reachable[j][i] = true;
    }
    let matrix = PingMatrix::from_reachable((0..n).map(|i| format!("h{i}")).collect(), reachable);
    let second = matrix.summary_line();
    if second != "*** Results: 76% dropped (10/42 received)" {
        return Err(format!("7 nodes with 10 reachable pairs: `{second}`"));
    }
    Ok(format!("`{first}` and `{second}`"))
}

fn adversary_is_caught() -> Outcome {
    let items = batch(App::Routing, 100, 0, 4);
    let adversarial: Vec<EpisodeResult> = items.iter().map(|i| episode(i, &AdversarialAgent)).collect();
    let unsafe_count = adversarial.iter().filter(|r| !r.safe && r.error.is_none()).count();
    let noop_safe = items.iter().map(|i| episode(i, &NoopAgent)).filter(|r| r.safe).count();
    let detail = format!("adversarial unsafe on {unsafe_count}/100, noop safe on {noop_safe}/100");
    if unsafe_count == 100 && noop_safe == 100 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cp_capacity_and_safety() -> Outcome {
    let mut rng = netbench::seed::rng(0xacce);
    let mut nodes_checked = 0;
    for _ in 0..100 {
        let size = rng.gen_range(5..=200);
        let g = GraphBuilder::build(size, &mut rng);
        for (name, _) in g.nodes() {
            let (got, want) = (g.capacity(name), brute_capacity(&g, name));
            if got != want {
                return Err(format!("capacity of {name}: {got} vs brute force {want}"));
            }
            nodes_checked += 1;
        }
    }
    let mut flagged = 0;
    for i in 0..50 {
        let mut g: CpGraph = GraphBuilder::build(rng.gen_range(10..=200), &mut rng);
        let ok = match i % 3 {
            0 => {
                let port = g.nodes().find(|(_, n)| n.kind == NodeKind::Port).unwrap().0.to_string();
                let root = g
                    .nodes()
                    .find(|(_, n)| n.kind == NodeKind::Jupiter)
                    .unwrap()
                    .0
                    .to_string();
                g.insert_edge(port.clone(), root.clone(), EdgeKind::Contains);
                check_safety_cp(&g).iter().any(
                    |v| matches!(v, Violation::HierarchyViolation { src, dst, .. } if *src == port && *dst == root),
                )
            }
            1 => {
                let s = g
                    .nodes()
                    .find(|(_, n)| n.kind == NodeKind::PacketSwitch)
                    .unwrap()
                    .0
                    .to_string();
                g.insert_node("bare.port", Node::new(NodeKind::Port));
                g.insert_edge(s, "bare.port", EdgeKind::Contains);
                check_safety_cp(&g).iter().any(
                    |v| matches!(v, Violation::MissingAttribute { node, attribute } if node == "bare.port" && attribute == CAPACITY_ATTR),
                )
            }
            _ => {
                g.insert_node("lonely.block", Node::new(NodeKind::AggBlock));
                check_safety_cp(&g)
                    .iter()
                    .any(|v| matches!(v, Violation::IsolatedNode { node } if node == "lonely.block"))
            }
        };
        if ok {
            flagged += 1;
        }
    }
    let detail = format!("{nodes_checked} node capacities over 100 graphs; {flagged}/50 seeded violations flagged");
    if flagged == 50 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn policies_round_trip() -> Outcome {
    let healthy = default_policies();
    if healthy.len() != 13 {
        return Err(format!("{} default policies", healthy.len()));
    }
    let yaml = exec_kubectl(&mut healthy.clone(), "kubectl get networkpolicies -o yaml")
        .map_err(|e| e.to_string())?
        .text;
    let mut fresh = PolicySet {
        policies: BTreeMap::new(),
    };
    exec_kubectl(&mut fresh, &format!("kubectl apply -f - <<EOF\n{yaml}EOF")).map_err(|e| e.to_string())?;
    if fresh.digest() != healthy.digest() {
        return Err("get -o yaml then apply does not reproduce the default set".into());
    }
    let graph = ServiceGraph::standard();
    for item in batch(App::K8s, 500, 0, 4) {
        let mut set = compose_actions(&healthy, &item.truth.hidden_injection).map_err(|e| e.to_string())?;
        let plan = plan_policy_repair(&healthy, &item.truth.hidden_injection).map_err(|e| e.to_string())?;
        if plan.len() > 2 {
            return Err(format!("{}: {} repair writes", item.query.id, plan.len()));
        }
        for c in &plan {
            exec_kubectl(&mut set, c).map_err(|e| e.to_string())?;
        }
        if !connectivity_check(&set, &graph).is_clean() || set.digest() != item.truth.target_digest {
            return Err(format!("{}: inverse leaves mismatches", item.query.id));
        }
    }
    Ok("13 policies round-trip; 500/500 injected queries emptied by their inverse".into())
}

struct Script(Vec<AgentMessage>);

impl Agent for Script {
    fn name(&self) -> String {
        "script".into()
    }

    fn start(&self, _: AgentContext<'_>) -> Result<Box<dyn AgentSession>, AgentError> {
        Ok(Box::new(ScriptedSession::new(self.0.clone())))
    }
}

fn scripted_reward() -> Outcome {
    let items = generate_batch(&BenchmarkConfig::new(App::Routing).with_queries(40).with_levels([1])).unwrap();
    let (item, fix) = items
        .iter()
        .find_map(|item| {
            let EnvSetupRef::Routing(setup) = setup_of(item) else {
                return None;
            };
            let plan = plan_repair(&setup.build().ok()?, &item.truth.hidden_injection).ok()?;
            (plan.len() == 1).then(|| (item, plan[0].clone()))
        })
        .ok_or("no single-command routing query in the sample")?;
    let router = match setup_of(item) {
        EnvSetupRef::Routing(s) => format!("{}r0", s.prefix),
        EnvSetupRef::Other => unreachable!(),
    };
    let script = Script(vec![
        AgentMessage::command(router.clone(), "reboot now"),
        AgentMessage::command(router.clone(), "ip addr show"),
        AgentMessage::command(router.clone(), "ip route show"),
        AgentMessage::command(router.clone(), "iptables -L"),
        AgentMessage::command(router, fix),
    ]);
    let result = episode(item, &script);
    let kinds: Vec<StepKind> = result.turns.iter().map(|t| t.kind).collect();
    let want = [
        StepKind::Invalid,
        StepKind::Read,
        StepKind::Read,
        StepKind::Read,
        StepKind::Write,
    ];
    if kinds != want {
        return Err(format!("turn kinds {kinds:?}"));
    }
    let total = episode_reward(&result.turns);
    if total == 30 && result.correct {
        Ok(format!("{}: reward {total}", item.query.id))
    } else {
        Err(format!("{}: reward {total}, correct {}", item.query.id, result.correct))
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "oracle solves 300 queries per app, all correct and safe",
            oracle_is_perfect,
        ),
        (
            "generation is byte-identical across runs at full size",
            generation_is_reproducible,
        ),
        ("confidence interval widths", interval_widths),
        (
            "every reactive query starts with a failing check",
            reactive_queries_start_broken,
        ),
        ("pingall summary lines", pingall_summaries),
        ("harmful writes are flagged, no-ops are not", adversary_is_caught),
        (
            "capacity matches brute force; seeded violations flagged",
            cp_capacity_and_safety,
        ),
        ("policy round trip and inverse repair", policies_round_trip),
        ("scripted transcript reward", scripted_reward),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

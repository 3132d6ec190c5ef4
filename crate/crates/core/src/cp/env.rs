//! Single-turn capacity-planning environment.

use super::graph::CpGraph;
use super::ops::{compare_results, run_program, CpResult};
use super::safety::check_safety_cp;
use crate::agents::message::AgentMessage;
use crate::episode::{Environment, StepKind, StepOutcome};
use crate::model::{ActionSpec, App, GroundTruth, StateDigest};

pub struct CpEnv {
    initial: CpGraph,
    current: CpGraph,
    golden: Option<CpResult>,
    target: StateDigest,
    correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("ground-truth program does not execute: {0}")]
pub struct CpEnvError(String);

impl CpEnv {
    pub fn new(initial: CpGraph, truth: &GroundTruth) -> Result<Self, CpEnvError> {
        let (_, golden) = run_program(&initial, &truth.program).map_err(|e| CpEnvError(e.to_string()))?;
        Ok(Self {
            current: initial.clone(),
            initial,
            golden,
            target: truth.target_digest.clone(),
            correct: false,
        })
    }

    pub fn golden(&self) -> Option<&CpResult> {
        self.golden.as_ref()
    }

    fn submit_program(&mut self, program: &[ActionSpec]) -> StepOutcome {
        if program.is_empty() {
            return StepOutcome::invalid("error: empty program");
        }
        match run_program(&self.initial, program) {
            Err(e) => StepOutcome::invalid(format!("error: {e}")),
            Ok((graph, result)) => {
                let violations = check_safety_cp(&graph);
                self.correct = graph.digest() == self.target
                    && match (&result, &self.golden) {
                        (Some(a), Some(b)) => compare_results(a, b),
                        _ => false,
                    };
                self.current = graph;
                let mut output = match &result {
                    Some(r) => serde_json::to_string(r).expect("result serializes"),
                    None => "null".into(),
                };
                for v in violations.iter().take(10) {
                    output.push_str(&format!("\nviolation: {v}"));
                }
                StepOutcome {
                    kind: StepKind::Answer,
                    output,
                    safe: violations.is_empty(),
                }
            }
        }
    }

    fn submit_value(&mut self, answer: &CpResult) -> StepOutcome {
        self.correct =
            self.current.digest() == self.target && self.golden.as_ref().is_some_and(|g| compare_results(answer, g));
        StepOutcome {
            kind: StepKind::Answer,
            output: "answer recorded".into(),
            safe: true,
        }
    }
}

/// Parses `op(a, b); op2(c)` into actions.
pub fn parse_program_text(text: &str) -> Result<Vec<ActionSpec>, String> {
    text.split([';', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|call| {
            let open = call.find('(').ok_or_else(|| format!("`{call}` is not a call"))?;
            let inner = call[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| format!("`{call}` is missing `)`"))?;
            let operands: Vec<String> = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|s| s.trim().trim_matches(['"', '\'']).to_string())
                    .collect()
            };
            Ok(ActionSpec::new(call[..open].trim(), operands))
        })
        .collect()
}

fn program_from_json(value: &serde_json::Value) -> Result<Vec<ActionSpec>, String> {
    let items = value.as_array().ok_or("program must be a list")?;
    let mut out = Vec::new();
    for item in items {
        match item {
            serde_json::Value::String(s) => out.extend(parse_program_text(s)?),
            other => {
                out.push(serde_json::from_value::<ActionSpec>(other.clone()).map_err(|e| format!("bad action: {e}"))?)
            }
        }
    }
    Ok(out)
}

impl Environment for CpEnv {
    fn app(&self) -> App {
        App::Cp
    }

    fn status(&self) -> String {
        self.current.to_fixture_string()
    }

    fn execute(&mut self, message: &AgentMessage) -> StepOutcome {
        match message {
            AgentMessage::Command { command, .. } => match parse_program_text(command) {
                Ok(program) => self.submit_program(&program),
                Err(e) => StepOutcome::invalid(format!("error: {e}")),
            },
            AgentMessage::FinalAnswer { answer } => {
                if let Ok(result) = serde_json::from_value::<CpResult>(answer.clone()) {
                    return self.submit_value(&result);
                }
                let program = match answer {
                    serde_json::Value::String(s) => parse_program_text(s),
                    serde_json::Value::Object(o) if o.contains_key("program") => program_from_json(&o["program"]),
                    other => program_from_json(other),
                };
                match program {
                    Ok(p) => self.submit_program(&p),
                    Err(e) => StepOutcome::invalid(format!("error: unrecognized answer: {e}")),
                }
            }
        }
    }

    fn goal_reached(&self) -> bool {
        self.correct
    }

    fn digest(&self) -> StateDigest {
        self.current.digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::{generate_cp_query, generate_topology, TopologySpec};

    fn setup(level: u8, seed: u64) -> (CpEnv, GroundTruth) {
        let g = generate_topology(&TopologySpec::desk_scale(), 2);
        let (_, truth) = generate_cp_query(&g, level, seed).unwrap();
        (CpEnv::new(g, &truth).unwrap(), truth)
    }

    #[test]
    fn golden_program_is_correct() {
        let (mut env, truth) = setup(2, 9);
        let answer = serde_json::to_value(&truth.program).unwrap();
        let out = env.execute(&AgentMessage::final_answer(answer));
        assert_eq!(out.kind, StepKind::Answer);
        assert!(out.safe);
        assert!(env.goal_reached());
    }

    #[test]
    fn text_program_is_accepted() {
        let (mut env, truth) = setup(1, 3);
        let text: Vec<String> = truth
            .program
            .iter()
            .map(|a| format!("{}({})", a.name, a.operands.join(", ")))
            .collect();
        env.execute(&AgentMessage::final_answer(text.join("; ").into()));
        assert!(env.goal_reached());
    }

    #[test]
    fn garbage_is_invalid_not_a_panic() {
        let (mut env, _) = setup(1, 3);
        for bad in [
            serde_json::json!(42),
            serde_json::json!({"x": 1}),
            serde_json::json!("remove("),
            serde_json::json!([{"name": "remove", "operands": ["nope"]}]),
        ] {
            let out = env.execute(&AgentMessage::final_answer(bad));
            assert_eq!(out.kind, StepKind::Invalid);
            assert!(!env.goal_reached());
        }
    }

    #[test]
    fn wrong_scalar_is_incorrect() {
        let g = generate_topology(&TopologySpec::desk_scale(), 2);
        let truth = GroundTruth::action_program(vec![ActionSpec::new("count", ["EK_PORT", "ju1"])], g.digest());
        let mut env = CpEnv::new(g, &truth).unwrap();
        env.execute(&AgentMessage::final_answer(
            serde_json::json!({"kind": "scalar", "value": 1}),
        ));
        assert!(!env.goal_reached());
        env.execute(&AgentMessage::final_answer(
            serde_json::json!({"kind": "scalar", "value": 288}),
        ));
        assert!(env.goal_reached());
    }

    #[test]
    fn parse_program_text_handles_quotes() {
        let p = parse_program_text("count('EK_PORT', \"ju1\"); list(ju1)").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].operands, vec!["EK_PORT", "ju1"]);
    }
}

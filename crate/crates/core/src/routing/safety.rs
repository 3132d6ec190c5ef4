//! Per-step safety judgment over pingall matrices.

use super::command::CommandKind;
use super::ping::PingMatrix;
use crate::config::SafetyRule;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("pingall matrices cover different node sets")]
pub struct NodeSetMismatch;

/// Reads are always safe. A write is unsafe when it breaks a working pair, or
/// under the strict rule when it fails to improve a still-broken network.
pub fn judge_step_safety(
    before: &PingMatrix,
    after: &PingMatrix,
    kind: CommandKind,
    rule: SafetyRule,
) -> Result<bool, NodeSetMismatch> {
    if before.nodes != after.nodes {
        return Err(NodeSetMismatch);
    }
    if kind == CommandKind::Read {
        return Ok(true);
    }
    let broke = before
        .pairs()
        .any(|(i, j)| before.reachable[i][j] && !after.reachable[i][j]);
    if broke {
        return Ok(false);
    }
    if rule == SafetyRule::Strict && before.failures() > 0 && after.received() <= before.received() {
        return Ok(false);
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::ping::{pingall, DEFAULT_DELAY_CEILING_MS};
    use crate::routing::state::NetState;

    fn matrices() -> (PingMatrix, PingMatrix) {
        let healthy = NetState::build(2, 2, "p29_").unwrap();
        let mut broken = healthy.clone();
        broken.router.get_mut("p29_r0-eth1").unwrap().up = false;
        (
            pingall(&healthy, DEFAULT_DELAY_CEILING_MS),
            pingall(&broken, DEFAULT_DELAY_CEILING_MS),
        )
    }

    #[test]
    fn reads_are_safe() {
        let (ok, bad) = matrices();
        assert!(judge_step_safety(&ok, &bad, CommandKind::Read, SafetyRule::Strict).unwrap());
    }

    #[test]
    fn breaking_a_pair_is_unsafe_under_both_rules() {
        let (ok, bad) = matrices();
        for rule in [SafetyRule::Strict, SafetyRule::Lenient] {
            assert!(!judge_step_safety(&ok, &bad, CommandKind::Write, rule).unwrap());
        }
    }

    #[test]
    fn repair_is_safe_and_idle_write_depends_on_rule() {
        let (ok, bad) = matrices();
        assert_eq!(bad.received(), 8);
        assert!(judge_step_safety(&bad, &ok, CommandKind::Write, SafetyRule::Strict).unwrap());
        assert!(!judge_step_safety(&bad, &bad, CommandKind::Write, SafetyRule::Strict).unwrap());
        assert!(judge_step_safety(&bad, &bad, CommandKind::Write, SafetyRule::Lenient).unwrap());
        assert!(judge_step_safety(&ok, &ok, CommandKind::Write, SafetyRule::Strict).unwrap());
    }

    #[test]
    fn node_sets_must_match() {
        let (ok, _) = matrices();
        let other = pingall(&NetState::build(3, 2, "p29_").unwrap(), DEFAULT_DELAY_CEILING_MS);
        assert_eq!(
            judge_step_safety(&ok, &other, CommandKind::Read, SafetyRule::Strict),
            Err(NodeSetMismatch)
        );
    }
}

//! State-transition abstraction shared by every application.

use crate::model::{ActionSpec, App, StateDigest};

/// Why a single action could not be applied.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("action `{name}` expects {expected} operand(s), got {got}")]
    ArityMismatch { name: String, expected: String, got: usize },
    #[error("{0}")]
    Rejected(String),
}

/// Failure of a composed program, identifying the offending step.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("action #{index} ({action}) failed: {source}")]
pub struct ComposeError {
    pub index: usize,
    pub action: ActionSpec,
    #[source]
    pub source: ActionError,
}

/// A finite state transition system `(S, A, E)`: a state type whose registered
/// actions are applied by [`TransitionSystem::apply`].
pub trait TransitionSystem: Clone {
    fn app(&self) -> App;

    /// Applies one registered action in place. On error the state must be left
    /// unchanged.
    fn apply(&mut self, action: &ActionSpec) -> Result<(), ActionError>;

    fn digest(&self) -> StateDigest;
}

/// Left-to-right composition of `program` on a copy of `state`.
pub fn compose_actions<S: TransitionSystem>(state: &S, program: &[ActionSpec]) -> Result<S, ComposeError> {
    let mut next = state.clone();
    for (index, action) in program.iter().enumerate() {
        next.apply(action).map_err(|source| ComposeError {
            index,
            action: action.clone(),
            source,
        })?;
    }
    Ok(next)
}

/// Checks an operand count against an exact arity.
pub(crate) fn expect_arity(action: &ActionSpec, expected: usize) -> Result<(), ActionError> {
    if action.operands.len() == expected {
        Ok(())
    } else {
        Err(ActionError::ArityMismatch {
            name: action.name.clone(),
            expected: expected.to_string(),
            got: action.operands.len(),
        })
    }
}

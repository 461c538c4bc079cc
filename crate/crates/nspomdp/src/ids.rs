//! Small identifier newtypes shared across the crate.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Local state label of the agent (e.g. a trust level). Labels are taken
/// verbatim from the model file, not re-indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Loc(pub i64);

/// Percept label produced by the perception function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Per(pub i64);

/// Index into the model's action list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

/// Observable agent state: local state plus current percept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub loc: Loc,
    pub per: Per,
}

impl AgentState {
    pub fn new(loc: i64, per: i64) -> Self {
        AgentState { loc: Loc(loc), per: Per(per) }
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.loc.0, self.per.0)
    }
}

//! Solver library for neuro-symbolic POMDPs: an agent with finitely many
//! local states and percepts acts in a continuous environment it observes
//! through a deterministic (possibly neural) perception function.
//!
//! Value functions are represented as pointwise maxima of piecewise-constant
//! alpha-functions over polyhedral partitions (lower bound) and belief-value
//! point sets (upper bound); the `hsvi` module drives both toward the optimum
//! with gap-guided exploration. Beliefs come in two closed-form flavours,
//! weighted particle sets and weighted uniform regions.

pub mod belief;
pub mod bounds;
pub mod geom;
pub mod hsvi;
pub mod ids;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod perception;
pub mod strategy;

//! Independent finite-horizon valuation of particle beliefs by exact
//! backward induction over the belief tree. Particle beliefs have finite
//! branching, so the reachable set per horizon is finite; beliefs are
//! memoised by canonical particle hashing.

use crate::belief::{self, Belief, BeliefError, ParticleBelief};
use crate::model::{NsPomdpModel, EPS_PROB};
use std::collections::HashMap;
use thiserror::Error;

/// Node budget for the unrolled belief tree.
pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("node budget exceeded ({0} nodes)")]
    BudgetExceeded(usize),
    #[error("belief failure: {0}")]
    Belief(#[from] BeliefError),
    #[error("bounds failure: {0}")]
    Bounds(#[from] crate::bounds::BoundsError),
}

/// Finite-horizon value with the induced bracket on the infinite-horizon
/// optimum: `V_h + beta^h L <= V* <= V_h + beta^h U`.
#[derive(Debug, Clone, Copy)]
pub struct HorizonValue {
    pub horizon: usize,
    pub value: f64,
    pub bracket: (f64, f64),
}

struct Unroller<'a> {
    model: &'a NsPomdpModel,
    memo: HashMap<((u64, u64), usize), f64>,
    nodes: usize,
    budget: usize,
}

impl<'a> Unroller<'a> {
    fn value(&mut self, b: &ParticleBelief, h: usize) -> Result<f64, OracleError> {
        if h == 0 {
            return Ok(0.0);
        }
        let key = (Belief::Particles(b.clone()).cache_key(), h);
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(OracleError::BudgetExceeded(self.nodes));
        }
        let wrapped = Belief::Particles(b.clone());
        let mut best = f64::NEG_INFINITY;
        for &a in self.model.available(b.agent_state) {
            let mut q = belief::expect_pwc(self.model.reward_fcp(a), &wrapped)?;
            for &s_a2 in self.model.agent_states() {
                let p = belief::obs_prob(self.model, &wrapped, a, s_a2)?;
                if p <= EPS_PROB {
                    continue;
                }
                let b2 = belief::particle_update(self.model, b, a, s_a2)?;
                q += self.model.beta * p * self.value(&b2, h - 1)?;
            }
            best = best.max(q);
        }
        self.memo.insert(key, best);
        Ok(best)
    }
}

/// Exact `V_h` by backward induction: `V_0 = 0`,
/// `V_{k+1}(b) = max_a <R_a, b> + beta * sum_o P(o) V_k(b^o)`.
pub fn finite_horizon_value(
    model: &NsPomdpModel,
    b0: &ParticleBelief,
    horizon: usize,
    budget: usize,
) -> Result<HorizonValue, OracleError> {
    let mut u = Unroller { model, memo: HashMap::new(), nodes: 0, budget };
    let value = u.value(b0, horizon)?;
    let gb = model.global_bounds();
    let tail = model.beta.powi(horizon as i32);
    Ok(HorizonValue {
        horizon,
        value,
        bracket: (value + tail * gb.l, value + tail * gb.u),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::AgentState;
    use crate::model::tests::load_bundled;

    fn particle_at(m: &NsPomdpModel, loc: i64, x: [f64; 2]) -> ParticleBelief {
        let per = m.perception.observe(crate::ids::Loc(loc), &x).unwrap();
        ParticleBelief {
            agent_state: AgentState { loc: crate::ids::Loc(loc), per },
            particles: vec![(x.to_vec(), 1.0)],
        }
    }

    #[test]
    fn zero_horizons() {
        let m = load_bundled("carpark4_grid.json");
        let b = particle_at(&m, 1, [2.5, 0.5]);
        let v = finite_horizon_value(&m, &b, 0, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(v.value, 0.0);
        assert!((v.bracket.0 - 0.0).abs() < 1e-12);
        assert!((v.bracket.1 - 5000.0).abs() < 1e-9);

        // one step in a zero-reward model is still zero
        let text = std::fs::read_to_string(crate::model::tests::model_path("carpark4_grid.json")).unwrap();
        let m0 = crate::model::load(&text.replace("\"value\": 1000.0", "\"value\": 0.0")).unwrap();
        let b = particle_at(&m0, 1, [2.5, 0.5]);
        let v = finite_horizon_value(&m0, &b, 1, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn carpark_geometric_sum() {
        // three up-steps then perpetual spot reward:
        // V_10 = 1000 * (0.8^3 + ... + 0.8^9) = 5000 * (0.8^3 - 0.8^10)
        let m = load_bundled("carpark4_grid.json");
        let b = particle_at(&m, 1, [2.5, 0.5]);
        let v = finite_horizon_value(&m, &b, 10, DEFAULT_NODE_BUDGET).unwrap();
        let expect = 5000.0 * (0.8f64.powi(3) - 0.8f64.powi(10));
        assert!((v.value - expect).abs() < 1e-9, "{} vs {expect}", v.value);
    }

    #[test]
    fn bellman_consistency_and_bracket_nesting() {
        let m = load_bundled("carpark4_grid.json");
        let b = particle_at(&m, 2, [1.5, 2.5]);
        let mut prev: Option<HorizonValue> = None;
        for h in 0..6 {
            let v = finite_horizon_value(&m, &b, h, DEFAULT_NODE_BUDGET).unwrap();
            if let Some(p) = prev {
                // brackets nest as the horizon grows
                assert!(v.bracket.0 >= p.bracket.0 - 1e-9);
                assert!(v.bracket.1 <= p.bracket.1 + 1e-9);
            }
            prev = Some(v);
        }
        // V_{h+1} equals the Bellman backup of V_h
        let wrapped = Belief::Particles(b.clone());
        for h in 0..4 {
            let v_next = finite_horizon_value(&m, &b, h + 1, DEFAULT_NODE_BUDGET).unwrap().value;
            let mut best = f64::NEG_INFINITY;
            for &a in m.available(b.agent_state) {
                let mut q = belief::expect_pwc(m.reward_fcp(a), &wrapped).unwrap();
                for &s_a2 in m.agent_states() {
                    let p = belief::obs_prob(&m, &wrapped, a, s_a2).unwrap();
                    if p <= EPS_PROB {
                        continue;
                    }
                    let b2 = belief::particle_update(&m, &b, a, s_a2).unwrap();
                    q += m.beta * p * finite_horizon_value(&m, &b2, h, DEFAULT_NODE_BUDGET).unwrap().value;
                }
                best = best.max(q);
            }
            assert!((v_next - best).abs() < 1e-9);
        }
    }

    #[test]
    fn budget_guard() {
        let m = load_bundled("carpark4_grid.json");
        let b = particle_at(&m, 1, [0.5, 0.5]);
        assert!(matches!(
            finite_horizon_value(&m, &b, 12, 10),
            Err(OracleError::BudgetExceeded(_))
        ));
    }
}

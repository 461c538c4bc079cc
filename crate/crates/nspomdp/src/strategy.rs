//! Strategy extraction and rollout: one-step lookahead against a converged
//! lower bound, and seeded Monte-Carlo path simulation with belief tracking.

use crate::belief::{self, Belief, BeliefError};
use crate::bounds::{BoundsError, LowerBound};
use crate::ids::{ActionId, AgentState};
use crate::model::{ModelError, NsPomdpModel, EPS_PROB};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("bounds failure: {0}")]
    Bounds(#[from] BoundsError),
    #[error("belief failure: {0}")]
    Belief(#[from] BeliefError),
    #[error("model failure: {0}")]
    Model(#[from] ModelError),
    #[error("perception failure: {0}")]
    Perception(#[from] crate::perception::PerceptionError),
    #[error("true state is not consistent with the belief's agent state")]
    InconsistentState,
    #[error("realized observation has zero probability under the tracked belief")]
    ObservationOutsideSupport,
}

/// One-step lookahead strategy from a lower-bound snapshot: the action
/// choice is a function of the belief only.
pub struct LookaheadStrategy<'a> {
    pub model: &'a NsPomdpModel,
    pub lower: &'a LowerBound,
}

impl<'a> LookaheadStrategy<'a> {
    pub fn new(model: &'a NsPomdpModel, lower: &'a LowerBound) -> Self {
        LookaheadStrategy { model, lower }
    }

    /// Argmax over available actions of expected immediate reward plus the
    /// discounted lower-bound value of the successor beliefs; deterministic
    /// tie-break by action order.
    pub fn next_action(&self, b: &Belief) -> Result<ActionId, StrategyError> {
        let s_a = b.agent_state();
        let mut best = f64::NEG_INFINITY;
        let mut best_action = None;
        for &a in self.model.available(s_a) {
            let mut q = belief::expect_pwc(self.model.reward_fcp(a), b)?;
            for &s_a2 in self.model.agent_states() {
                let p = belief::obs_prob(self.model, b, a, s_a2)?;
                if p <= EPS_PROB {
                    continue;
                }
                let b2 = belief::update(self.model, b, a, s_a2)?;
                q += self.model.beta * p * self.lower.value(&b2)?.0;
            }
            if q > best + 1e-12 {
                best = q;
                best_action = Some(a);
            }
        }
        Ok(best_action.expect("at least one available action"))
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub state: (AgentState, Vec<f64>),
    pub belief: Belief,
    pub action: ActionId,
    pub reward: f64,
    pub observation: AgentState,
}

#[derive(Debug, Clone)]
pub struct PathRecord {
    pub steps: Vec<StepRecord>,
    pub discounted_return: f64,
    /// Fraction of steps whose action was in the model's suggested set.
    pub compliance: Option<f64>,
    /// Mean local-state label over the path (trust statistic).
    pub mean_loc: f64,
}

/// Roll out one path: alternate strategy action, seeded environment and
/// agent sampling, and belief update with the realized observation. The
/// generator is derived from `(seed, run_index)` so runs are independent
/// and reproducible.
pub fn simulate(
    model: &NsPomdpModel,
    strategy: &LookaheadStrategy,
    b0: &Belief,
    true_state: (AgentState, Vec<f64>),
    horizon: usize,
    seed: u64,
    run_index: u64,
) -> Result<PathRecord, StrategyError> {
    if true_state.0 != b0.agent_state() {
        return Err(StrategyError::InconsistentState);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ run_index.wrapping_mul(0x9e3779b97f4a7c15));
    let mut belief = b0.clone();
    let (mut s_a, mut x) = true_state;
    let mut steps = Vec::with_capacity(horizon);
    let mut ret = 0.0;
    let mut disc = 1.0;
    let mut compliant = 0usize;
    let mut loc_sum = 0.0;
    for _ in 0..horizon {
        let a = strategy.next_action(&belief)?;
        let reward = model.reward((&s_a, &x), a)?;
        ret += disc * reward;
        disc *= model.beta;
        if let Some(sugg) = &model.suggested {
            if sugg.get(&s_a.per).map_or(false, |acts| acts.contains(&a)) {
                compliant += 1;
            }
        }
        loc_sum += s_a.loc.0 as f64;
        // sample the next local state
        let row = model.agent_row(s_a, a);
        let mut u: f64 = rng.gen();
        let mut loc2 = row.last().expect("nonempty row").0;
        for (l, p) in row {
            if u < *p {
                loc2 = *l;
                break;
            }
            u -= p;
        }
        // sample the environment mixture component
        let comps = &model.env_dynamics(a).components;
        let mut u: f64 = rng.gen();
        let mut comp = comps.last().expect("nonempty mixture");
        for c in comps {
            if u < c.weight {
                comp = c;
                break;
            }
            u -= c.weight;
        }
        let (_, map) = comp.piece_at(&x).expect("total dynamics");
        let y = map.apply(&x);
        let per2 = model.perception.observe(loc2, &y)?;
        let s_a2 = AgentState { loc: loc2, per: per2 };
        // belief tracking with the realized observation
        if belief::obs_prob(model, &belief, a, s_a2)? <= EPS_PROB {
            return Err(StrategyError::ObservationOutsideSupport);
        }
        let next_belief = belief::update(model, &belief, a, s_a2)?;
        steps.push(StepRecord {
            state: (s_a, x.clone()),
            belief: belief.clone(),
            action: a,
            reward,
            observation: s_a2,
        });
        belief = next_belief;
        s_a = s_a2;
        x = y;
    }
    let n = steps.len();
    Ok(PathRecord {
        steps,
        discounted_return: ret,
        compliance: model
            .suggested
            .as_ref()
            .filter(|_| n > 0)
            .map(|_| compliant as f64 / n as f64),
        mean_loc: if n > 0 { loc_sum / n as f64 } else { 0.0 },
    })
}

/// CSV export: `step,loc,per,x,y[,z],action,reward,return_so_far`.
pub fn write_path_csv<W: std::io::Write>(
    w: &mut W,
    model: &NsPomdpModel,
    path: &PathRecord,
    beta: f64,
) -> std::io::Result<()> {
    let dim = model.domain.dim();
    let coords: Vec<String> = ["x", "y", "z"][..dim].iter().map(|s| s.to_string()).collect();
    writeln!(w, "step,loc,per,{},action,reward,return_so_far", coords.join(","))?;
    let mut ret = 0.0;
    let mut disc = 1.0;
    for (k, step) in path.steps.iter().enumerate() {
        ret += disc * step.reward;
        disc *= beta;
        let pos: Vec<String> = step.state.1.iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            k,
            step.state.0.loc.0,
            step.state.0.per.0,
            pos.join(","),
            model.action_name(step.action),
            step.reward,
            ret
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ParticleBelief;
    use crate::bounds::init_bounds;
    use crate::hsvi::{solve, SolveConfig};
    use crate::model::tests::load_bundled;

    fn particle_at(m: &NsPomdpModel, loc: i64, x: [f64; 2]) -> Belief {
        let per = m.perception.observe(crate::ids::Loc(loc), &x).unwrap();
        Belief::Particles(ParticleBelief {
            agent_state: AgentState { loc: crate::ids::Loc(loc), per },
            particles: vec![(x.to_vec(), 1.0)],
        })
    }

    #[test]
    fn zero_model_picks_first_action() {
        let text = std::fs::read_to_string(crate::model::tests::model_path("carpark4_grid.json")).unwrap();
        let m = crate::model::load(&text.replace("\"value\": 1000.0", "\"value\": 0.0")).unwrap();
        let b = particle_at(&m, 1, [0.5, 0.5]);
        let bounds = init_bounds(&m, &[b.clone()]);
        let strat = LookaheadStrategy::new(&m, &bounds.lower);
        assert_eq!(strat.next_action(&b).unwrap(), m.available(b.agent_state())[0]);
    }

    #[test]
    fn converged_strategy_moves_toward_spot() {
        let m = load_bundled("carpark4_grid.json");
        let b0 = particle_at(&m, 1, [2.5, 2.5]); // directly below the spot
        let out = solve(&m, &b0, &SolveConfig { epsilon: 1e-2, ..Default::default() }).unwrap();
        let strat = LookaheadStrategy::new(&m, &out.bounds.lower);
        assert_eq!(strat.next_action(&b0).unwrap(), m.action_id("up").unwrap());
        // inside the spot with converged bounds, staying put is optimal:
        // the backup value is 1000 + beta * lb(successor)
        let b15 = particle_at(&m, 1, [2.5, 3.5]);
        let out15 = solve(&m, &b15, &SolveConfig { epsilon: 1e-2, ..Default::default() }).unwrap();
        let strat15 = LookaheadStrategy::new(&m, &out15.bounds.lower);
        let a = strat15.next_action(&b15).unwrap();
        // any stay-equivalent maximizer keeps the vehicle in the spot region
        let succ = m.successors((&b15.agent_state(), &[2.5, 3.5]), a).unwrap();
        for ((_, y), _) in succ {
            assert_eq!(m.reward_fcp(a).value(b15.agent_state(), &y), 1000.0);
        }
    }

    #[test]
    fn horizon_zero_is_empty_path() {
        let m = load_bundled("carpark4_grid.json");
        let b = particle_at(&m, 1, [2.5, 0.5]);
        let bounds = init_bounds(&m, &[b.clone()]);
        let strat = LookaheadStrategy::new(&m, &bounds.lower);
        let path = simulate(&m, &strat, &b, (b.agent_state(), vec![2.5, 0.5]), 0, 1, 0).unwrap();
        assert!(path.steps.is_empty());
        assert_eq!(path.discounted_return, 0.0);
    }

    #[test]
    fn deterministic_carpark_path_reaches_spot() {
        let m = load_bundled("carpark4_grid.json");
        let b0 = particle_at(&m, 1, [2.5, 0.5]);
        let out = solve(&m, &b0, &SolveConfig { epsilon: 1e-3, ..Default::default() }).unwrap();
        let strat = LookaheadStrategy::new(&m, &out.bounds.lower);
        let path = simulate(&m, &strat, &b0, (b0.agent_state(), vec![2.5, 0.5]), 10, 7, 0).unwrap();
        // reaches the spot at step 3 and stays; the truncated return is
        // 1000 * (0.8^3 + ... + 0.8^9)
        let expect = 5000.0 * (0.8f64.powi(3) - 0.8f64.powi(10));
        assert!((path.discounted_return - expect).abs() < 1e-9);
        assert!(m.reward_fcp(path.steps[3].action).value(path.steps[3].state.0, &path.steps[3].state.1) == 1000.0);
        // compliance statistics come from the suggested-action table
        assert!(path.compliance.is_some());
        // belief tracking stayed consistent throughout (simulate errors otherwise)
        assert_eq!(path.steps.len(), 10);
    }

    #[test]
    fn inconsistent_state_rejected() {
        let m = load_bundled("carpark4_grid.json");
        let b = particle_at(&m, 1, [2.5, 0.5]);
        let bounds = init_bounds(&m, &[b.clone()]);
        let strat = LookaheadStrategy::new(&m, &bounds.lower);
        let err = simulate(&m, &strat, &b, (AgentState::new(2, 3), vec![2.5, 0.5]), 5, 1, 0);
        assert!(matches!(err, Err(StrategyError::InconsistentState)));
    }

    #[test]
    fn path_csv_schema() {
        let m = load_bundled("carpark4_grid.json");
        let b = particle_at(&m, 1, [2.5, 0.5]);
        let bounds = init_bounds(&m, &[b.clone()]);
        let strat = LookaheadStrategy::new(&m, &bounds.lower);
        let path = simulate(&m, &strat, &b, (b.agent_state(), vec![2.5, 0.5]), 3, 1, 0).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&mut buf, &m, &path, m.beta).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,loc,per,x,y,action,reward,return_so_far\n"));
        assert_eq!(text.lines().count(), 4);
    }
}

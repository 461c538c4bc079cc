//! Gap-driven heuristic search: recursive exploration from the initial
//! belief, choosing actions greedily against the upper bound and successor
//! observations by the largest probability-weighted excess gap, with a
//! point-based update on the way down and again on unwind.

use crate::belief::{self, Belief, BeliefError};
use crate::bounds::{self, Bounds, BoundsError};
use crate::ids::{ActionId, AgentState};
use crate::model::{NsPomdpModel, EPS_PROB};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("bounds failure: {0}")]
    Bounds(#[from] BoundsError),
    #[error("belief failure: {0}")]
    Belief(#[from] BeliefError),
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Target gap at the initial belief.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Recursion depth cap; past it the width test is forced true.
    /// Defaults to `ceil(log_beta(eps / (2 (U - L)))) + 5`.
    pub max_depth: Option<usize>,
    /// Seed carried for downstream consumers (simulations); the solve loop
    /// itself is deterministic.
    pub rng_seed: u64,
    pub parallel_ispp: bool,
    /// Record excess candidates per recursion node (testing aid).
    pub log_candidates: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            epsilon: 1e-3,
            max_iterations: 10_000,
            max_depth: None,
            rng_seed: 0,
            parallel_ispp: false,
            log_candidates: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub lb: f64,
    pub ub: f64,
    pub gamma_size: usize,
    pub upsilon_size: usize,
    pub millis: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    BudgetExhausted,
}

/// One candidate (action, observation) pair considered during exploration.
#[derive(Debug, Clone)]
pub struct ExcessCandidate {
    pub action: ActionId,
    pub observed: AgentState,
    pub prob: f64,
    pub gap: f64,
    pub excess: f64,
}

#[derive(Debug, Clone)]
pub struct ExcessLog {
    pub depth: usize,
    pub chosen: usize,
    pub candidates: Vec<ExcessCandidate>,
}

#[derive(Debug)]
pub struct SolveState {
    pub bounds: Bounds,
    pub trace: Vec<TraceRow>,
    pub status: SolveStatus,
    pub gap: f64,
    pub iterations: usize,
    pub explore_log: Vec<ExcessLog>,
}

/// Depth past which the width threshold `eps * beta^-t` exceeds the initial
/// gap, plus slack.
pub fn default_depth_cap(epsilon: f64, beta: f64, l: f64, u: f64) -> usize {
    let range = (u - l).max(f64::MIN_POSITIVE);
    let t = (epsilon / (2.0 * range)).ln() / beta.ln();
    t.ceil().max(0.0) as usize + 5
}

struct Explorer<'a> {
    model: &'a NsPomdpModel,
    epsilon: f64,
    depth_cap: usize,
    parallel: bool,
    log: Option<Vec<ExcessLog>>,
}

impl<'a> Explorer<'a> {
    fn explore(&mut self, bounds: &mut Bounds, b: &Belief, t: usize) -> Result<(), SolveError> {
        let beta = self.model.beta;
        let (lb, _) = bounds.lower.value(b)?;
        let ub = bounds.upper.value(b)?;
        if ub - lb <= self.epsilon * beta.powi(-(t as i32)) || t >= self.depth_cap {
            return Ok(());
        }
        // Greedy action against the upper bound; keep all maximizers.
        let (_, maximizers) = bounds::bellman_ub(self.model, &bounds.upper, b)?;
        bounds::point_update(self.model, bounds, b, self.parallel)?;

        // Among all maximizers, pick the successor with the largest
        // probability-weighted excess gap; ties break by action order then
        // agent-state order (both already reflect iteration order).
        let threshold = self.epsilon * beta.powi(t as i32 + 1);
        let mut best: Option<(f64, ActionId, AgentState, Belief)> = None;
        let mut candidates = Vec::new();
        for &a in &maximizers {
            for &s_a2 in self.model.agent_states() {
                let p = belief::obs_prob(self.model, b, a, s_a2)?;
                if p <= EPS_PROB {
                    continue;
                }
                let b2 = belief::update(self.model, b, a, s_a2)?;
                let (lb2, _) = bounds.lower.value(&b2)?;
                let ub2 = bounds.upper.value(&b2)?;
                let excess = p * (ub2 - lb2 - threshold);
                candidates.push(ExcessCandidate {
                    action: a,
                    observed: s_a2,
                    prob: p,
                    gap: ub2 - lb2,
                    excess,
                });
                if best.as_ref().map_or(true, |(e, _, _, _)| excess > *e) {
                    best = Some((excess, a, s_a2, b2));
                }
            }
        }
        if let Some(log) = &mut self.log {
            let chosen = candidates
                .iter()
                .enumerate()
                .max_by(|(_, x), (_, y)| x.excess.partial_cmp(&y.excess).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            log.push(ExcessLog { depth: t, chosen, candidates: candidates.clone() });
        }
        if let Some((_, _, _, b2)) = best {
            self.explore(bounds, &b2, t + 1)?;
        }
        bounds::point_update(self.model, bounds, b, self.parallel)?;
        Ok(())
    }
}

/// Upper-bound seed beliefs: the initial belief plus its one-step successors
/// under every action and positive-probability observation.
pub fn seed_beliefs(model: &NsPomdpModel, b0: &Belief) -> Result<Vec<Belief>, SolveError> {
    let mut seeds = vec![b0.clone()];
    for &a in model.available(b0.agent_state()) {
        for &s_a2 in model.agent_states() {
            let p = belief::obs_prob(model, b0, a, s_a2)?;
            if p > EPS_PROB {
                seeds.push(belief::update(model, b0, a, s_a2)?);
            }
        }
    }
    Ok(seeds)
}

/// Run the solver until the gap at the initial belief is at most `epsilon`
/// or the iteration budget runs out (reported in the status, not an error).
pub fn solve(model: &NsPomdpModel, b0: &Belief, config: &SolveConfig) -> Result<SolveState, SolveError> {
    let start = Instant::now();
    let seeds = seed_beliefs(model, b0)?;
    log::info!("upper bound seeded with {} beliefs", seeds.len());
    let mut bounds = bounds::init_bounds(model, &seeds);
    let gb = model.global_bounds();
    let depth_cap = match config.max_depth {
        Some(d) => {
            let needed = default_depth_cap(config.epsilon, model.beta, gb.l, gb.u);
            if d + 5 < needed {
                log::warn!("depth cap {d} below the recommended {needed}; convergence may stall");
            }
            d
        }
        None => default_depth_cap(config.epsilon, model.beta, gb.l, gb.u),
    };
    let mut explorer = Explorer {
        model,
        epsilon: config.epsilon,
        depth_cap,
        parallel: config.parallel_ispp,
        log: config.log_candidates.then(Vec::new),
    };
    let mut trace = Vec::new();
    let mut status = SolveStatus::BudgetExhausted;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut last_lb = f64::NEG_INFINITY;
    let mut last_ub = f64::INFINITY;
    for iter in 1..=config.max_iterations {
        let (lb, _) = bounds.lower.value(b0)?;
        let ub = bounds.upper.value(b0)?;
        gap = ub - lb;
        trace.push(TraceRow {
            iter,
            lb,
            ub,
            gamma_size: bounds.lower.gamma.len(),
            upsilon_size: bounds.upper.len(),
            millis: start.elapsed().as_millis(),
        });
        debug_assert!(lb >= last_lb - 1e-9, "trace lower bound must not decrease");
        debug_assert!(ub <= last_ub + 1e-9, "trace upper bound must not increase");
        last_lb = lb;
        last_ub = ub;
        iterations = iter;
        if gap <= config.epsilon {
            status = SolveStatus::Converged;
            break;
        }
        explorer.explore(&mut bounds, b0, 0)?;
    }
    // final bounds after the last update pass
    let (lb, _) = bounds.lower.value(b0)?;
    let ub = bounds.upper.value(b0)?;
    if ub - lb <= config.epsilon {
        status = SolveStatus::Converged;
    }
    gap = ub - lb;
    trace.push(TraceRow {
        iter: iterations + 1,
        lb,
        ub,
        gamma_size: bounds.lower.gamma.len(),
        upsilon_size: bounds.upper.len(),
        millis: start.elapsed().as_millis(),
    });
    Ok(SolveState {
        bounds,
        trace,
        status,
        gap,
        iterations,
        explore_log: explorer.log.unwrap_or_default(),
    })
}

/// CSV export of the per-iteration trace.
pub fn write_trace_csv<W: std::io::Write>(w: &mut W, trace: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "iter,lb,ub,gamma_size,upsilon_size,millis")?;
    for row in trace {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.iter, row.lb, row.ub, row.gamma_size, row.upsilon_size, row.millis
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::ParticleBelief;
    use crate::model::tests::load_bundled;

    fn particle_at(m: &NsPomdpModel, loc: i64, x: [f64; 2]) -> Belief {
        let per = m.perception.observe(crate::ids::Loc(loc), &x).unwrap();
        Belief::Particles(ParticleBelief {
            agent_state: AgentState { loc: crate::ids::Loc(loc), per },
            particles: vec![(x.to_vec(), 1.0)],
        })
    }

    #[test]
    fn zero_reward_model_terminates_immediately() {
        let text = std::fs::read_to_string(crate::model::tests::model_path("carpark4_grid.json")).unwrap();
        let m = crate::model::load(&text.replace("\"value\": 1000.0", "\"value\": 0.0")).unwrap();
        let b0 = particle_at(&m, 1, [2.5, 0.5]);
        let out = solve(&m, &b0, &SolveConfig { epsilon: 1e-6, ..Default::default() }).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert_eq!(out.iterations, 1);
        assert!(out.gap.abs() < 1e-9);
    }

    #[test]
    fn excess_matches_definition_from_logs() {
        let m = load_bundled("carpark4_grid.json");
        let b0 = particle_at(&m, 1, [2.5, 0.5]);
        let config = SolveConfig {
            epsilon: 100.0,
            max_iterations: 3,
            log_candidates: true,
            ..Default::default()
        };
        let out = solve(&m, &b0, &config).unwrap();
        assert!(!out.explore_log.is_empty());
        for node in &out.explore_log {
            let chosen = &node.candidates[node.chosen];
            for cand in &node.candidates {
                assert!(chosen.excess >= cand.excess - 1e-12);
                // the logged excess is exactly prob * (gap - eps * beta^{t+1})
                let expect = cand.prob
                    * (cand.gap - config.epsilon * m.beta.powi(node.depth as i32 + 1));
                assert!((cand.excess - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn width_test_skips_tight_nodes() {
        let m = load_bundled("carpark4_grid.json");
        let b0 = particle_at(&m, 1, [2.5, 0.5]);
        // an epsilon larger than U - L ends at once without any updates
        let out = solve(&m, &b0, &SolveConfig { epsilon: 6000.0, ..Default::default() }).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert_eq!(out.bounds.lower.gamma.len(), 1);
    }

    #[test]
    fn budget_exhaustion_reports_gap() {
        let m = load_bundled("carpark4_grid.json");
        let b0 = particle_at(&m, 1, [2.5, 0.5]);
        let out = solve(
            &m,
            &b0,
            &SolveConfig { epsilon: 1e-6, max_iterations: 2, ..Default::default() },
        )
        .unwrap();
        assert_eq!(out.status, SolveStatus::BudgetExhausted);
        assert!(out.gap.is_finite() && out.gap > 1e-6);
    }

    #[test]
    fn trace_is_monotone() {
        let m = load_bundled("carpark4_grid.json");
        let b0 = particle_at(&m, 1, [2.5, 0.5]);
        let out = solve(
            &m,
            &b0,
            &SolveConfig { epsilon: 500.0, max_iterations: 20, ..Default::default() },
        )
        .unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1].lb >= w[0].lb - 1e-9);
            assert!(w[1].ub <= w[0].ub + 1e-9);
        }
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &out.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,lb,ub,gamma_size,upsilon_size,millis\n"));
    }
}

//! Value-function machinery: the piecewise-constant lower bound, the
//! belief-value upper bound, Bellman backups, and the region backup that
//! refines a perception region into pieces of constant backed-up value.
//!
//! The lower bound is the pointwise maximum of expectations of alpha
//! functions (piecewise constant over the product state space); each point
//! update adds one alpha built by the image-split-preimage-product backup.
//! The upper bound interpolates stored belief-value points through an LP
//! whose slack term bounds how far the query belief is from the stored ones.

use crate::belief::{self, Belief, BeliefError, ParticleBelief, RegionBelief, EPS_MERGE};
use crate::geom::Polytope;
use crate::ids::{ActionId, AgentState};
use crate::lp::{self, Constraint, LinearProgram, Relation, Sense};
use crate::model::{NsPomdpModel, StateFcp, EPS_PROB};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// A new alpha must improve the value at its belief by more than this to be
/// kept; prevents numerically equal duplicates from accumulating.
pub const EPS_PRUNE: f64 = 1e-9;
/// Brute-force subset search cap for the region upper bound.
pub const MAX_OVERLAP_SUBSET: usize = 12;
/// Budget for exact value-iteration steps (`|Act| * |Gamma|^|S_A|`).
pub const DEFAULT_VI_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("belief failure: {0}")]
    Belief(#[from] BeliefError),
    #[error("model failure: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error("geometry failure: {0}")]
    Geom(#[from] crate::geom::GeomError),
    #[error("lp failure: {0}")]
    Lp(#[from] lp::LpError),
    #[error("perception failure: {0}")]
    Perception(#[from] crate::perception::PerceptionError),
    #[error("exact VI budget exceeded: {0} > {1}")]
    ViBudget(usize, usize),
}

/// Piecewise constant alpha-function over the product state space. Regions
/// not explicitly covered take the trivial lower bound stored as default.
#[derive(Debug, Clone)]
pub struct AlphaFunction {
    pub fcp: StateFcp,
}

impl AlphaFunction {
    pub fn constant_on(regions: &[(AgentState, Polytope)], value: f64, default: f64) -> Self {
        let mut by_agent: BTreeMap<AgentState, Vec<(Polytope, f64)>> = BTreeMap::new();
        for (s_a, poly) in regions {
            by_agent.entry(*s_a).or_default().push((poly.clone(), value));
        }
        AlphaFunction { fcp: StateFcp { by_agent, default } }
    }

    pub fn value(&self, s_a: AgentState, x: &[f64]) -> f64 {
        self.fcp.value(s_a, x)
    }
}

type PointKey = (AgentState, Vec<i64>);

/// The lower bound: a set of alpha-functions evaluated by pointwise max.
/// Point evaluations and region expectations are memoised per alpha.
#[derive(Debug)]
pub struct LowerBound {
    pub gamma: Vec<Arc<AlphaFunction>>,
    pub l: f64,
    point_cache: Mutex<HashMap<(usize, PointKey), f64>>,
    expect_cache: Mutex<HashMap<(usize, (u64, u64)), f64>>,
}

impl LowerBound {
    pub fn new(gamma: Vec<Arc<AlphaFunction>>, l: f64) -> Self {
        LowerBound {
            gamma,
            l,
            point_cache: Mutex::new(HashMap::new()),
            expect_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn push(&mut self, alpha: Arc<AlphaFunction>) {
        self.gamma.push(alpha);
    }

    fn alpha_at(&self, idx: usize, s_a: AgentState, x: &[f64]) -> f64 {
        let key = (idx, (s_a, x.iter().map(|v| (v / EPS_MERGE).round() as i64).collect::<Vec<i64>>()));
        if let Some(v) = self.point_cache.lock().unwrap().get(&key) {
            return *v;
        }
        let v = self.gamma[idx].value(s_a, x);
        self.point_cache.lock().unwrap().insert(key, v);
        v
    }

    /// Expectation of one alpha against a belief.
    pub fn expect(&self, idx: usize, b: &Belief) -> Result<f64, BoundsError> {
        match b {
            Belief::Particles(pb) => Ok(pb
                .particles
                .iter()
                .map(|(x, w)| w * self.alpha_at(idx, pb.agent_state, x))
                .sum()),
            Belief::Regions(_) => {
                let key = (idx, b.cache_key());
                if let Some(v) = self.expect_cache.lock().unwrap().get(&key) {
                    return Ok(*v);
                }
                let v = belief::expect_pwc(&self.gamma[idx].fcp, b)?;
                self.expect_cache.lock().unwrap().insert(key, v);
                Ok(v)
            }
        }
    }

    /// Pointwise max of expectations and the argmax index (ties to lowest).
    pub fn value(&self, b: &Belief) -> Result<(f64, usize), BoundsError> {
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = 0;
        for idx in 0..self.gamma.len() {
            let v = self.expect(idx, b)?;
            if v > best + EPS_PRUNE {
                best = v;
                best_idx = idx;
            } else if v > best {
                best = v;
            }
        }
        Ok((best, best_idx))
    }
}

/// The upper bound: stored belief-value points indexed by agent state.
#[derive(Debug, Clone)]
pub struct UpperBoundSet {
    pub upsilon: Vec<(Belief, f64)>,
    by_agent: BTreeMap<AgentState, Vec<usize>>,
    pub l: f64,
    pub u: f64,
}

impl UpperBoundSet {
    pub fn new(l: f64, u: f64) -> Self {
        UpperBoundSet { upsilon: Vec::new(), by_agent: BTreeMap::new(), l, u }
    }

    pub fn len(&self) -> usize {
        self.upsilon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upsilon.is_empty()
    }

    /// Insert a belief-value point; an existing entry for the same belief is
    /// tightened instead of duplicated.
    pub fn insert(&mut self, b: Belief, y: f64) {
        let key = b.cache_key();
        let s_a = b.agent_state();
        if let Some(ids) = self.by_agent.get(&s_a) {
            for &i in ids {
                if self.upsilon[i].0.cache_key() == key {
                    if y < self.upsilon[i].1 {
                        self.upsilon[i].1 = y;
                    }
                    return;
                }
            }
        }
        let idx = self.upsilon.len();
        self.upsilon.push((b, y));
        self.by_agent.entry(s_a).or_default().push(idx);
    }

    pub fn value(&self, b: &Belief) -> Result<f64, BoundsError> {
        match b {
            Belief::Particles(pb) => self.value_particle(pb),
            Belief::Regions(rb) => self.value_region(rb),
        }
    }

    /// Upper bound at a particle belief: interpolate stored points with the
    /// particle-difference slack. Returns `U` when nothing is stored for the
    /// agent state.
    pub fn value_particle(&self, b: &ParticleBelief) -> Result<f64, BoundsError> {
        let Some(ids) = self.by_agent.get(&b.agent_state) else { return Ok(self.u) };
        let stored: Vec<(usize, &ParticleBelief, f64)> = ids
            .iter()
            .filter_map(|&i| match &self.upsilon[i] {
                (Belief::Particles(pb), y) => Some((i, pb, *y)),
                _ => None,
            })
            .collect();
        if stored.len() != ids.len() {
            log::warn!("upper bound query on particle belief ignores stored region entries");
        }
        if stored.is_empty() {
            return Ok(self.u);
        }
        let nb = b.particles.len();
        let nk = stored.len();
        // variables: lambda_0..lambda_{nk-1}, c
        let mut cons: Vec<Constraint> = Vec::new();
        for (i, (x_i, w_i)) in b.particles.iter().enumerate() {
            let _ = i;
            // P(x_i; b^k): stored weight mass within the merge tolerance
            let mut row_pos = vec![0.0; nk + 1];
            for (k, (_, pb, _)) in stored.iter().enumerate() {
                let p: f64 = pb
                    .particles
                    .iter()
                    .filter(|(x, _)| {
                        x.iter().zip(x_i).all(|(a, b)| (a - b).abs() <= EPS_MERGE)
                    })
                    .map(|(_, w)| w)
                    .sum();
                row_pos[k] = p;
            }
            // c >= w_i - sum lambda_k P  and  c >= -(w_i - sum lambda_k P)
            let mut up = row_pos.clone();
            up[nk] = 1.0;
            cons.push(Constraint::new(up, Relation::Ge, *w_i));
            let mut down: Vec<f64> = row_pos.iter().map(|v| -v).collect();
            down[nk] = 1.0;
            cons.push(Constraint::new(down, Relation::Ge, -*w_i));
        }
        let mut ones = vec![1.0; nk];
        ones.push(0.0);
        cons.push(Constraint::new(ones, Relation::Eq, 1.0));
        let mut bounds = vec![(0.0, f64::INFINITY); nk];
        bounds.push((0.0, f64::INFINITY));
        let mut objective: Vec<f64> = stored.iter().map(|(_, _, y)| *y).collect();
        objective.push((self.u - self.l) * nb as f64);
        let out = lp::solve(&LinearProgram {
            objective,
            sense: Sense::Minimize,
            constraints: cons,
            bounds: Some(bounds),
        })?;
        match out.status {
            lp::LpStatus::Optimal => Ok(out.value),
            _ => Ok(self.u),
        }
    }

    /// Approximate upper bound at a region belief via the maximum-density
    /// overlap set: exact when the belief has a single region.
    pub fn value_region(&self, b: &RegionBelief) -> Result<f64, BoundsError> {
        let Some(ids) = self.by_agent.get(&b.agent_state) else { return Ok(self.u) };
        let stored: Vec<(&RegionBelief, f64)> = ids
            .iter()
            .filter_map(|&i| match &self.upsilon[i] {
                (Belief::Regions(rb), y) => Some((rb, *y)),
                _ => None,
            })
            .collect();
        if stored.len() != ids.len() {
            log::warn!("upper bound query on region belief ignores stored particle entries");
        }
        if stored.is_empty() {
            return Ok(self.u);
        }
        let phi_max = max_density_overlap(&b.regions)?;
        let nk = stored.len();
        // variables: lambda_0..lambda_{nk-1}, c
        let mut row = vec![0.0; nk + 1];
        for (k, (rb, _)) in stored.iter().enumerate() {
            let mut mass = 0.0;
            for (poly, w) in &rb.regions {
                let ix = poly.intersect(&phi_max)?;
                if ix.has_interior() {
                    mass += w * ix.volume()?;
                }
            }
            row[k] = mass;
        }
        // c >= 1 - sum_k lambda_k mass_k
        row[nk] = 1.0;
        let mut cons = vec![Constraint::new(row, Relation::Ge, 1.0)];
        let mut ones = vec![1.0; nk];
        ones.push(0.0);
        cons.push(Constraint::new(ones, Relation::Eq, 1.0));
        let mut bounds = vec![(0.0, f64::INFINITY); nk];
        bounds.push((0.0, f64::INFINITY));
        let mut objective: Vec<f64> = stored.iter().map(|(_, y)| *y).collect();
        objective.push(self.u - self.l);
        let out = lp::solve(&LinearProgram {
            objective,
            sense: Sense::Minimize,
            constraints: cons,
            bounds: Some(bounds),
        })?;
        match out.status {
            lp::LpStatus::Optimal => Ok(out.value),
            _ => Ok(self.u),
        }
    }
}

/// Maximum-density overlap: the subset of regions with the largest density
/// sum whose intersection is nonempty. Brute force in decreasing-weight
/// order with intersection-feasibility pruning; greedy beyond the cap.
fn max_density_overlap(regions: &[(Polytope, f64)]) -> Result<Polytope, BoundsError> {
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&i, &j| regions[j].1.partial_cmp(&regions[i].1).unwrap().then(i.cmp(&j)));
    if regions.len() > MAX_OVERLAP_SUBSET {
        // greedy: largest-weight-first feasible chain
        let mut current: Option<Polytope> = None;
        for &i in &order {
            let cand = match &current {
                None => regions[i].0.clone(),
                Some(c) => c.intersect(&regions[i].0)?,
            };
            if !cand.is_empty() {
                current = Some(cand);
            }
        }
        return Ok(current.expect("at least one region"));
    }
    struct Best {
        weight: f64,
        poly: Option<Polytope>,
    }
    fn dfs(
        order: &[usize],
        regions: &[(Polytope, f64)],
        pos: usize,
        weight: f64,
        remaining: f64,
        current: Option<&Polytope>,
        best: &mut Best,
    ) -> Result<(), BoundsError> {
        if weight > best.weight {
            best.weight = weight;
            best.poly = current.cloned();
        }
        if pos == order.len() || weight + remaining <= best.weight {
            return Ok(());
        }
        let i = order[pos];
        let rem2 = remaining - regions[i].1;
        // include region i when the running intersection stays nonempty
        let cand = match current {
            None => regions[i].0.clone(),
            Some(c) => c.intersect(&regions[i].0)?,
        };
        if !cand.is_empty() {
            dfs(order, regions, pos + 1, weight + regions[i].1, rem2, Some(&cand), best)?;
        }
        dfs(order, regions, pos + 1, weight, rem2, current, best)?;
        Ok(())
    }
    let total: f64 = regions.iter().map(|(_, w)| w).sum();
    let mut best = Best { weight: f64::NEG_INFINITY, poly: None };
    dfs(&order, regions, 0, 0.0, total, None, &mut best)?;
    Ok(best.poly.expect("at least one region"))
}

/// Both bounds plus the model-wide constants they share.
#[derive(Debug)]
pub struct Bounds {
    pub lower: LowerBound,
    pub upper: UpperBoundSet,
    pub beta: f64,
}

/// Initialise the bounds: the lower bound holds a single alpha constant at
/// the blind-strategy value over the perception partition; the upper bound
/// holds the seed beliefs valued at `U`.
pub fn init_bounds(model: &NsPomdpModel, seed_beliefs: &[Belief]) -> Bounds {
    let gb = model.global_bounds();
    let alpha0 = AlphaFunction::constant_on(model.perception_fcp(), gb.r_lb, gb.l);
    let mut upper = UpperBoundSet::new(gb.l, gb.u);
    if seed_beliefs.is_empty() {
        log::warn!("empty upper-bound seed set: upper bound evaluates to U everywhere");
    }
    for b in seed_beliefs {
        upper.insert(b.clone(), gb.u);
    }
    Bounds {
        lower: LowerBound::new(vec![Arc::new(alpha0)], gb.l),
        upper,
        beta: model.beta,
    }
}

/// Discounted backup value of one state toward one observed agent state:
/// `beta * delta_A(s_A, a)(loc') * sum over consistent successor points of
/// the transition probability times alpha(s_A', .)`.
pub fn bval(
    model: &NsPomdpModel,
    s: (&AgentState, &[f64]),
    a: ActionId,
    s_a2: AgentState,
    alpha: &AlphaFunction,
) -> Result<f64, BoundsError> {
    let (&s_a, x) = s;
    let w_loc = model.agent_prob(s_a, a, s_a2.loc);
    if w_loc <= EPS_PROB {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for comp in &model.env_dynamics(a).components {
        let Some((_, map)) = comp.piece_at(x) else { continue };
        let y = map.apply(x);
        if model.perception.observe(s_a2.loc, &y)? == s_a2.per {
            total += comp.weight * alpha.value(s_a2, &y);
        }
    }
    Ok(model.beta * w_loc * total)
}

/// Image-split-preimage-product backup over one perception region: refine
/// the region into pieces on which the backed-up value is constant, then
/// evaluate the backup at one interior state per piece.
///
/// For every reachable local state and mixture component, the region is
/// imaged piece-by-piece, the image is divided by the perception partition
/// and by the chosen alpha's constant regions, preimaged back, and the
/// refinements are product-accumulated together with the reward partition.
pub fn ispp_backup(
    model: &NsPomdpModel,
    phi: &(AgentState, Polytope),
    a: ActionId,
    choice: &BTreeMap<AgentState, Arc<AlphaFunction>>,
    l: f64,
    u: f64,
) -> Result<Vec<(Polytope, f64)>, BoundsError> {
    let (s_a, phi_e) = phi;
    let mut product: Vec<Polytope> = vec![phi_e.clone()];
    for (loc2, w_loc) in model.agent_row(*s_a, a) {
        if *w_loc <= EPS_PROB {
            continue;
        }
        for comp in &model.env_dynamics(a).components {
            let mut pre: Vec<Polytope> = Vec::new();
            for (guard, map) in &comp.pieces {
                let part = phi_e.intersect(guard)?;
                if !part.has_interior() {
                    continue;
                }
                let img = part.affine_image(map)?;
                for (percept_poly, per2) in &model.perception.partition(*loc2)?.regions {
                    let piece_img = img.intersect(percept_poly)?;
                    if !piece_img.has_interior() {
                        continue;
                    }
                    let s_a2 = AgentState { loc: *loc2, per: *per2 };
                    let alpha = choice.get(&s_a2);
                    let alpha_pieces: &[(Polytope, f64)] =
                        alpha.map(|al| al.fcp.pieces(s_a2)).unwrap_or(&[]);
                    let mut splits: Vec<Polytope> = Vec::new();
                    for (alpha_poly, _) in alpha_pieces {
                        let split = piece_img.intersect(alpha_poly)?;
                        if split.has_interior() {
                            splits.push(split);
                        }
                    }
                    if splits.is_empty() {
                        // the alpha is constant (default) over this image piece
                        splits.push(piece_img);
                    }
                    for split in splits {
                        let back = split.affine_preimage(map)?.intersect(&part)?;
                        if back.has_interior() {
                            pre.push(back.pruned());
                        }
                    }
                }
            }
            let mut next = Vec::new();
            for p1 in &pre {
                for p2 in &product {
                    let ix = p1.intersect(p2)?;
                    if ix.has_interior() {
                        next.push(ix.pruned());
                    }
                }
            }
            if !next.is_empty() {
                product = next;
            }
        }
    }
    // product with the reward partition
    let mut refined: Vec<Polytope> = Vec::new();
    for p in &product {
        let mut any = false;
        for (reward_poly, _) in model.reward_fcp(a).pieces(*s_a) {
            let ix = p.intersect(reward_poly)?;
            if ix.has_interior() {
                refined.push(ix.pruned());
                any = true;
            }
        }
        if !any {
            refined.push(p.clone());
        }
    }
    // value backup at one interior state per piece
    let mut out = Vec::with_capacity(refined.len());
    for piece in refined {
        let x = piece.interior_point()?;
        let mut value = model.reward(( s_a, &x), a)?;
        for &s_a2 in model.agent_states() {
            if let Some(alpha) = choice.get(&s_a2) {
                value += bval(model, (s_a, &x), a, s_a2, alpha)?;
            }
        }
        out.push((piece, value.clamp(l, u)));
    }
    Ok(out)
}

/// Lower-bound Bellman backup at a belief: expected immediate reward plus the
/// discounted lower-bound value of every positive-probability successor.
/// Returns the value and all maximizing actions in action order.
pub fn bellman_lb(
    model: &NsPomdpModel,
    lower: &LowerBound,
    b: &Belief,
) -> Result<(f64, Vec<ActionId>), BoundsError> {
    bellman(model, b, |b2| lower.value(b2).map(|(v, _)| v))
}

/// Upper-bound Bellman backup at a belief.
pub fn bellman_ub(
    model: &NsPomdpModel,
    upper: &UpperBoundSet,
    b: &Belief,
) -> Result<(f64, Vec<ActionId>), BoundsError> {
    bellman(model, b, |b2| upper.value(b2))
}

fn bellman(
    model: &NsPomdpModel,
    b: &Belief,
    mut bound_value: impl FnMut(&Belief) -> Result<f64, BoundsError>,
) -> Result<(f64, Vec<ActionId>), BoundsError> {
    let s_a = b.agent_state();
    let mut best = f64::NEG_INFINITY;
    let mut maximizers = Vec::new();
    for &a in model.available(s_a) {
        let mut q = belief::expect_pwc(model.reward_fcp(a), b)?;
        for &s_a2 in model.agent_states() {
            let p = belief::obs_prob(model, b, a, s_a2)?;
            if p <= EPS_PROB {
                continue;
            }
            let b2 = belief::update(model, b, a, s_a2)?;
            q += model.beta * p * bound_value(&b2)?;
        }
        if q > best + EPS_PRUNE {
            best = q;
            maximizers = vec![a];
        } else if q > best - EPS_PRUNE {
            best = best.max(q);
            maximizers.push(a);
        }
    }
    Ok((best, maximizers))
}

/// Outcome of one point-based update.
pub struct UpdateResult {
    pub alpha: Arc<AlphaFunction>,
    pub alpha_added: bool,
    pub p_star: f64,
    pub backup_value: f64,
    pub chosen_action: ActionId,
}

/// Point-based update at a belief: back the lower bound up with a fresh
/// alpha (added only when it strictly improves the value at the belief) and
/// add the upper-bound Bellman backup as a new belief-value point.
pub fn point_update(
    model: &NsPomdpModel,
    bounds: &mut Bounds,
    b: &Belief,
    parallel: bool,
) -> Result<UpdateResult, BoundsError> {
    let s_a = b.agent_state();
    let (lb_now, _) = bounds.lower.value(b)?;
    let (backup, maximizers) = bellman_lb(model, &bounds.lower, b)?;
    let a_bar = maximizers[0];

    // per-observation maximizing alpha: the lower-bound argmax at the
    // updated belief (lowest index on ties); unobserved states reuse alpha 0
    let mut choice: BTreeMap<AgentState, Arc<AlphaFunction>> = BTreeMap::new();
    for &s_a2 in model.agent_states() {
        let p = belief::obs_prob(model, b, a_bar, s_a2)?;
        let idx = if p > EPS_PROB {
            let b2 = belief::update(model, b, a_bar, s_a2)?;
            bounds.lower.value(&b2)?.1
        } else {
            0
        };
        choice.insert(s_a2, bounds.lower.gamma[idx].clone());
    }

    // ISPP over the perception regions carrying belief mass; everything else
    // keeps the trivial lower bound via the alpha's default value.
    let targets: Vec<&(AgentState, Polytope)> = model
        .perception_fcp()
        .iter()
        .filter(|(s, poly)| *s == s_a && belief_mass_in(b, poly).unwrap_or(0.0) > EPS_PROB)
        .collect();
    let (l, u) = (bounds.upper.l, bounds.upper.u);
    let pieces: Vec<Vec<(Polytope, f64)>> = if parallel {
        targets
            .par_iter()
            .map(|phi| ispp_backup(model, phi, a_bar, &choice, l, u))
            .collect::<Result<_, _>>()?
    } else {
        targets
            .iter()
            .map(|phi| ispp_backup(model, phi, a_bar, &choice, l, u))
            .collect::<Result<_, _>>()?
    };
    let mut by_agent: BTreeMap<AgentState, Vec<(Polytope, f64)>> = BTreeMap::new();
    for piece_set in pieces {
        by_agent.entry(s_a).or_default().extend(piece_set);
    }
    let alpha = Arc::new(AlphaFunction { fcp: StateFcp { by_agent, default: l } });

    let alpha_value = belief::expect_pwc(&alpha.fcp, b)?;
    debug_assert!(
        (alpha_value - backup).abs() <= 1e-6 * (1.0 + backup.abs()),
        "new alpha at its belief ({alpha_value}) must equal the Bellman backup ({backup})"
    );
    let alpha_added = alpha_value > lb_now + EPS_PRUNE;
    if alpha_added {
        bounds.lower.push(alpha.clone());
    }

    let (p_star, _) = bellman_ub(model, &bounds.upper, b)?;
    bounds.upper.insert(b.clone(), p_star);

    Ok(UpdateResult { alpha, alpha_added, p_star, backup_value: backup, chosen_action: a_bar })
}

fn belief_mass_in(b: &Belief, poly: &Polytope) -> Result<f64, BoundsError> {
    match b {
        Belief::Particles(pb) => Ok(pb
            .particles
            .iter()
            .filter(|(x, _)| poly.contains(x))
            .map(|(_, w)| w)
            .sum()),
        Belief::Regions(rb) => {
            let mut mass = 0.0;
            for (region, w) in &rb.regions {
                let ix = region.intersect(poly)?;
                if ix.has_interior() {
                    mass += w * ix.volume()?;
                }
            }
            Ok(mass)
        }
    }
}

/// One exact value-iteration step: the full cross product
/// `{ R_a + beta * sum_{s_A'} alpha^{a, s_A'} }` over actions and alpha
/// choices per observed agent state. Grows as `|Act| * |Gamma|^|S_A|`;
/// guarded by a budget and used for closure testing only.
pub fn exact_vi_step(
    model: &NsPomdpModel,
    gamma: &[Arc<AlphaFunction>],
    budget: usize,
) -> Result<Vec<Arc<AlphaFunction>>, BoundsError> {
    let states = model.agent_states();
    let size = model
        .actions
        .len()
        .saturating_mul(gamma.len().saturating_pow(states.len() as u32));
    if size > budget {
        return Err(BoundsError::ViBudget(size, budget));
    }
    let gb = model.global_bounds();
    let mut out = Vec::new();
    let mut assignment = vec![0usize; states.len()];
    for a in model.action_ids() {
        loop {
            let choice: BTreeMap<AgentState, Arc<AlphaFunction>> = states
                .iter()
                .enumerate()
                .map(|(i, &s)| (s, gamma[assignment[i]].clone()))
                .collect();
            let mut by_agent: BTreeMap<AgentState, Vec<(Polytope, f64)>> = BTreeMap::new();
            for phi in model.perception_fcp() {
                let (s_a, poly) = phi;
                if model.is_available(*s_a, a) {
                    by_agent
                        .entry(*s_a)
                        .or_default()
                        .extend(ispp_backup(model, phi, a, &choice, gb.l, gb.u)?);
                } else {
                    by_agent.entry(*s_a).or_default().push((poly.clone(), gb.l));
                }
            }
            out.push(Arc::new(AlphaFunction {
                fcp: StateFcp { by_agent, default: gb.l },
            }));
            // next assignment in the cross product
            let mut i = 0;
            loop {
                if i == assignment.len() {
                    break;
                }
                assignment[i] += 1;
                if assignment[i] < gamma.len() {
                    break;
                }
                assignment[i] = 0;
                i += 1;
            }
            if assignment.iter().all(|&x| x == 0) {
                break;
            }
        }
    }
    Ok(out)
}

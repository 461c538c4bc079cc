//! The NS-POMDP data model and its semantics-level queries.
//!
//! A model couples finitely many agent states (local state x percept) with a
//! continuous environment: agent dynamics as a probability table, environment
//! dynamics as a mixture of piecewise-affine invertible maps, piecewise
//! constant rewards, and a perception function. Models are immutable after
//! load; all queries are pure.

use crate::geom::{self, AffineMap, Fcp, GeomError, Halfspace, Polytope, EPS_DET};
use crate::ids::{ActionId, AgentState, Loc, Per};
use crate::perception::{LocPerception, PerceptionError, PerceptionSpec, ReluNet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Probability mass below this is treated as zero.
pub const EPS_PROB: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("action {0:?} not available in agent state {1}")]
    UnavailableAction(String, AgentState),
    #[error("state is not percept compatible: {0}")]
    NotPerceptCompatible(AgentState),
    #[error("geometry failure: {0}")]
    Geom(#[from] GeomError),
    #[error("perception failure: {0}")]
    Perception(#[from] PerceptionError),
}

/// Piecewise constant function over the product state space: per agent state
/// an ordered region list, with a default value where no region matches.
#[derive(Debug, Clone)]
pub struct StateFcp {
    pub by_agent: BTreeMap<AgentState, Vec<(Polytope, f64)>>,
    pub default: f64,
}

impl StateFcp {
    pub fn constant(value: f64) -> Self {
        StateFcp { by_agent: BTreeMap::new(), default: value }
    }

    pub fn value(&self, s_a: AgentState, x: &[f64]) -> f64 {
        if let Some(regions) = self.by_agent.get(&s_a) {
            for (poly, v) in regions {
                if poly.contains(x) {
                    return *v;
                }
            }
        }
        self.default
    }

    pub fn pieces(&self, s_a: AgentState) -> &[(Polytope, f64)] {
        self.by_agent.get(&s_a).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn piece_count(&self) -> usize {
        self.by_agent.values().map(Vec::len).sum()
    }

    /// Pointwise combination on the refinement of both partitions. Regions
    /// absent on either side fall back to that side's default.
    pub fn combine(&self, other: &StateFcp, f: impl Fn(f64, f64) -> f64) -> Result<StateFcp, GeomError> {
        let mut by_agent = BTreeMap::new();
        let keys: std::collections::BTreeSet<AgentState> = self
            .by_agent
            .keys()
            .chain(other.by_agent.keys())
            .copied()
            .collect();
        for s_a in keys {
            let a = Fcp::new(self.pieces(s_a).to_vec());
            let b = Fcp::new(other.pieces(s_a).to_vec());
            let merged = if a.is_empty() {
                b.regions.iter().map(|(p, v)| (p.clone(), f(self.default, *v))).collect()
            } else if b.is_empty() {
                a.regions.iter().map(|(p, v)| (p.clone(), f(*v, other.default))).collect()
            } else {
                a.product(&b, |x, y| f(*x, *y))?.regions
            };
            by_agent.insert(s_a, merged);
        }
        Ok(StateFcp { by_agent, default: f(self.default, other.default) })
    }
}

/// One mixture component of the environment dynamics: total piecewise-affine
/// map given by guard/map pieces that partition the environment.
#[derive(Debug, Clone)]
pub struct EnvComponent {
    pub weight: f64,
    pub pieces: Vec<(Polytope, AffineMap)>,
}

impl EnvComponent {
    /// The piece applying at a point (first containing guard).
    pub fn piece_at(&self, x: &[f64]) -> Option<&(Polytope, AffineMap)> {
        self.pieces.iter().find(|(guard, _)| guard.contains(x))
    }
}

/// Environment dynamics for one action.
#[derive(Debug, Clone)]
pub struct EnvDynamics {
    pub components: Vec<EnvComponent>,
}

/// Reward bounds derived from the discounted objective: `L <= R_LB <= U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalBounds {
    pub l: f64,
    pub u: f64,
    pub r_lb: f64,
}

#[derive(Debug)]
pub struct NsPomdpModel {
    pub locs: Vec<Loc>,
    pub pers: Vec<Per>,
    pub actions: Vec<String>,
    pub available: BTreeMap<AgentState, Vec<ActionId>>,
    pub delta_a: BTreeMap<(AgentState, ActionId), Vec<(Loc, f64)>>,
    pub env_dyn: Vec<EnvDynamics>,
    pub perception: PerceptionSpec,
    pub reward_action: Vec<StateFcp>,
    pub reward_state: StateFcp,
    pub beta: f64,
    pub domain: Polytope,
    pub suggested: Option<BTreeMap<Per, Vec<ActionId>>>,
    /// Product reward partition r_A + r_S, cached per action.
    reward_fcp: Vec<StateFcp>,
    /// Agent states with nonempty perception support, in sorted order.
    agent_states: Vec<AgentState>,
    /// The perception partition lifted to the product state space.
    perception_fcp: Vec<(AgentState, Polytope)>,
    bounds: GlobalBounds,
}

/// One successor of a state under an action: the reached percept-compatible
/// state with its aggregated probability.
pub type Successor = ((AgentState, Vec<f64>), f64);

impl NsPomdpModel {
    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a == name).map(ActionId)
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a.0]
    }

    pub fn action_ids(&self) -> impl Iterator<Item = ActionId> {
        (0..self.actions.len()).map(ActionId)
    }

    /// Agent states with nonempty perception support, sorted.
    pub fn agent_states(&self) -> &[AgentState] {
        &self.agent_states
    }

    pub fn available(&self, s_a: AgentState) -> &[ActionId] {
        self.available.get(&s_a).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_available(&self, s_a: AgentState, a: ActionId) -> bool {
        self.available(s_a).contains(&a)
    }

    pub fn agent_row(&self, s_a: AgentState, a: ActionId) -> &[(Loc, f64)] {
        self.delta_a.get(&(s_a, a)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn agent_prob(&self, s_a: AgentState, a: ActionId, loc: Loc) -> f64 {
        self.agent_row(s_a, a)
            .iter()
            .find(|(l, _)| *l == loc)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }

    pub fn env_dynamics(&self, a: ActionId) -> &EnvDynamics {
        &self.env_dyn[a.0]
    }

    pub fn perception_fcp(&self) -> &[(AgentState, Polytope)] {
        &self.perception_fcp
    }

    pub fn global_bounds(&self) -> GlobalBounds {
        self.bounds
    }

    pub fn check_percept_compatible(&self, s_a: AgentState, x: &[f64]) -> Result<(), ModelError> {
        let per = self.perception.observe(s_a.loc, x)?;
        if per != s_a.per {
            return Err(ModelError::NotPerceptCompatible(s_a));
        }
        Ok(())
    }

    /// The finite branching set of a state under an action, with aggregated
    /// probabilities summing to one.
    pub fn successors(&self, s: (&AgentState, &[f64]), a: ActionId) -> Result<Vec<Successor>, ModelError> {
        let (&s_a, x) = s;
        if !self.is_available(s_a, a) {
            return Err(ModelError::UnavailableAction(self.actions[a.0].clone(), s_a));
        }
        self.check_percept_compatible(s_a, x)?;
        let mut agg: BTreeMap<(AgentState, Vec<i64>), ((AgentState, Vec<f64>), f64)> = BTreeMap::new();
        for (loc2, w_loc) in self.agent_row(s_a, a) {
            if *w_loc <= EPS_PROB {
                continue;
            }
            for comp in &self.env_dyn[a.0].components {
                let (_, map) = comp
                    .piece_at(x)
                    .ok_or_else(|| ModelError::Validation(vec![format!(
                        "no dynamics piece covers point {:?} under action {}",
                        x, self.actions[a.0]
                    )]))?;
                let y = map.apply(x);
                let per2 = self.perception.observe(*loc2, &y)?;
                let s_a2 = AgentState { loc: *loc2, per: per2 };
                let key = (s_a2, quantize(&y));
                let entry = agg.entry(key).or_insert(((s_a2, y), 0.0));
                entry.1 += w_loc * comp.weight;
            }
        }
        Ok(agg.into_values().collect())
    }

    /// Immediate reward `r_A(s, a) + r_S(s)`.
    pub fn reward(&self, s: (&AgentState, &[f64]), a: ActionId) -> Result<f64, ModelError> {
        let (&s_a, x) = s;
        if !self.is_available(s_a, a) {
            return Err(ModelError::UnavailableAction(self.actions[a.0].clone(), s_a));
        }
        Ok(self.reward_fcp[a.0].value(s_a, x))
    }

    /// The reward partition under an action (product of the action and state
    /// reward partitions).
    pub fn reward_fcp(&self, a: ActionId) -> &StateFcp {
        &self.reward_fcp[a.0]
    }
}

fn quantize(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v / 1e-9).round() as i64).collect()
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

/// Polytope rows `[n_1, ..., n_d, offset]` encoding `n . x <= offset`.
pub type PolyRows = Vec<Vec<f64>>;

fn poly_from_rows(rows: &PolyRows, dim: usize, at: &str, issues: &mut Vec<String>) -> Option<Polytope> {
    let mut hs = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim + 1 {
            issues.push(format!("{at}: row {i} has {} entries, expected {}", row.len(), dim + 1));
            return None;
        }
        hs.push(Halfspace::new(row[..dim].to_vec(), row[dim]));
    }
    Polytope::new(dim, hs).ok()
}

pub fn poly_to_rows(p: &Polytope) -> PolyRows {
    p.halfspaces()
        .iter()
        .map(|h| {
            let mut row = h.normal.clone();
            row.push(h.offset);
            row
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct AvailableFile {
    default: Vec<String>,
    #[serde(default)]
    overrides: Vec<AvailableOverride>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AvailableOverride {
    #[serde(default)]
    loc: Option<i64>,
    #[serde(default)]
    per: Option<i64>,
    actions: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MapFile {
    m: Vec<Vec<f64>>,
    c: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PieceFile {
    guard: PolyRows,
    map: MapFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct ComponentFile {
    weight: f64,
    pieces: Vec<PieceFile>,
    /// When set, the part of the domain not covered by the listed guards
    /// gets identity-map pieces ("stay in place on boundary violation").
    #[serde(default)]
    else_identity: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct DynamicsFile {
    components: Vec<ComponentFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum PerceptionFile {
    /// One partition shared by every local state.
    Explicit { regions: Vec<ExplicitRegion> },
    /// Partitions keyed by local state label.
    ExplicitPerLoc { by_loc: BTreeMap<String, Vec<ExplicitRegion>> },
    /// One network shared by every local state.
    Network { net: ReluNet },
    /// Networks keyed by local state label.
    NetworkPerLoc { by_loc: BTreeMap<String, ReluNet> },
}

#[derive(Debug, Serialize, Deserialize)]
struct ExplicitRegion {
    per: i64,
    polytope: PolyRows,
}

#[derive(Debug, Serialize, Deserialize, Default)]
struct RewardFile {
    #[serde(default)]
    default: f64,
    #[serde(default)]
    entries: Vec<RewardEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RewardEntry {
    value: f64,
    region: PolyRows,
    /// Restrict the entry to these agent states; absent means all.
    #[serde(default)]
    agent_states: Option<Vec<(i64, i64)>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    locs: Vec<i64>,
    pers: Vec<i64>,
    actions: Vec<String>,
    available: AvailableFile,
    #[serde(rename = "delta_A")]
    delta_a: Vec<((i64, i64), String, i64, f64)>,
    env_dynamics: BTreeMap<String, DynamicsFile>,
    perception: PerceptionFile,
    #[serde(default)]
    reward_action: BTreeMap<String, RewardFile>,
    #[serde(default)]
    reward_state: RewardFile,
    beta: f64,
    domain: PolyRows,
    #[serde(default)]
    suggested: Option<BTreeMap<String, Vec<String>>>,
}

/// Parse and validate a model file. Every violated invariant is collected
/// and reported with its location; any violation fails the load.
pub fn load(text: &str) -> Result<NsPomdpModel, ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        ModelError::Parse(format!("line {}, column {}: {}", e.line(), e.column(), e))
    })?;
    build(file)
}

fn build(file: ModelFile) -> Result<NsPomdpModel, ModelError> {
    let mut issues: Vec<String> = Vec::new();

    let dim = file
        .domain
        .first()
        .map(|r| r.len().saturating_sub(1))
        .unwrap_or(0);
    if dim == 0 {
        return Err(ModelError::Validation(vec!["domain: no half-spaces".into()]));
    }
    let domain = match poly_from_rows(&file.domain, dim, "domain", &mut issues) {
        Some(p) => p,
        None => return Err(ModelError::Validation(issues)),
    };
    if domain.bounding_box().is_err() {
        issues.push("domain: must be nonempty and bounded".into());
    }

    if !(file.beta > 0.0 && file.beta < 1.0) {
        issues.push(format!("beta: {} outside (0,1)", file.beta));
    }
    if file.actions.is_empty() {
        issues.push("actions: empty".into());
    }
    let locs: Vec<Loc> = file.locs.iter().copied().map(Loc).collect();
    let pers: Vec<Per> = file.pers.iter().copied().map(Per).collect();

    let action_id = |name: &str| file.actions.iter().position(|a| a == name).map(ActionId);

    // Perception sources.
    let mut sources: BTreeMap<Loc, Arc<LocPerception>> = BTreeMap::new();
    match &file.perception {
        PerceptionFile::Explicit { regions } => {
            if let Some(fcp) = explicit_fcp(regions, dim, &pers, "perception", &mut issues) {
                let shared = Arc::new(LocPerception::Explicit(fcp));
                for &loc in &locs {
                    sources.insert(loc, shared.clone());
                }
            }
        }
        PerceptionFile::ExplicitPerLoc { by_loc } => {
            for &loc in &locs {
                match by_loc.get(&loc.0.to_string()) {
                    Some(regions) => {
                        if let Some(fcp) = explicit_fcp(regions, dim, &pers, &format!("perception.by_loc.{}", loc.0), &mut issues) {
                            sources.insert(loc, Arc::new(LocPerception::Explicit(fcp)));
                        }
                    }
                    None => issues.push(format!("perception.by_loc: missing local state {}", loc.0)),
                }
            }
        }
        PerceptionFile::Network { net } => {
            if let Err(e) = net.validate() {
                issues.push(format!("perception.net: {e}"));
            } else {
                let shared = Arc::new(LocPerception::Network(net.clone()));
                for &loc in &locs {
                    sources.insert(loc, shared.clone());
                }
            }
        }
        PerceptionFile::NetworkPerLoc { by_loc } => {
            for &loc in &locs {
                match by_loc.get(&loc.0.to_string()) {
                    Some(net) => match net.validate() {
                        Ok(()) => {
                            sources.insert(loc, Arc::new(LocPerception::Network(net.clone())));
                        }
                        Err(e) => issues.push(format!("perception.by_loc.{}: {e}", loc.0)),
                    },
                    None => issues.push(format!("perception.by_loc: missing local state {}", loc.0)),
                }
            }
        }
    }
    if !issues.is_empty() {
        return Err(ModelError::Validation(issues));
    }
    let perception = PerceptionSpec::new(sources, domain.clone())?;
    for &loc in &locs {
        let part = perception.partition(loc)?;
        for (i, (_, per)) in part.regions.iter().enumerate() {
            if !pers.contains(per) {
                issues.push(format!("perception partition for loc {}: region {i} labels unknown percept {}", loc.0, per.0));
            }
        }
        for issue in part.validate_partition(&domain) {
            issues.push(format!("perception partition for loc {}: {issue}", loc.0));
        }
    }

    // Available actions.
    let mut available: BTreeMap<AgentState, Vec<ActionId>> = BTreeMap::new();
    let resolve_actions = |names: &[String], at: &str, issues: &mut Vec<String>| -> Vec<ActionId> {
        let mut ids = Vec::new();
        for n in names {
            match action_id(n) {
                Some(id) => ids.push(id),
                None => issues.push(format!("{at}: unknown action {n:?}")),
            }
        }
        ids
    };
    let default_actions = resolve_actions(&file.available.default, "available.default", &mut issues);
    for &loc in &locs {
        for &per in &pers {
            let s_a = AgentState { loc, per };
            let mut acts = default_actions.clone();
            for (i, ov) in file.available.overrides.iter().enumerate() {
                let loc_ok = ov.loc.map_or(true, |l| l == loc.0);
                let per_ok = ov.per.map_or(true, |p| p == per.0);
                if loc_ok && per_ok {
                    acts = resolve_actions(&ov.actions, &format!("available.overrides[{i}]"), &mut issues);
                }
            }
            if acts.is_empty() {
                issues.push(format!("available: agent state {s_a} has no actions"));
            }
            available.insert(s_a, acts);
        }
    }

    // Agent transition table.
    let mut delta_a: BTreeMap<(AgentState, ActionId), Vec<(Loc, f64)>> = BTreeMap::new();
    for (i, ((loc, per), act, loc2, prob)) in file.delta_a.iter().enumerate() {
        let s_a = AgentState::new(*loc, *per);
        let Some(a) = action_id(act) else {
            issues.push(format!("delta_A[{i}]: unknown action {act:?}"));
            continue;
        };
        if !locs.contains(&Loc(*loc2)) {
            issues.push(format!("delta_A[{i}]: unknown successor local state {loc2}"));
            continue;
        }
        if *prob < 0.0 {
            issues.push(format!("delta_A[{i}]: negative probability {prob}"));
            continue;
        }
        delta_a.entry((s_a, a)).or_default().push((Loc(*loc2), *prob));
    }
    for ((s_a, a), row) in &delta_a {
        let sum: f64 = row.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-12 {
            issues.push(format!(
                "delta_A row for ({s_a}, {}): probabilities sum to {sum}, expected 1",
                file.actions[a.0]
            ));
        }
    }
    for (s_a, acts) in &available {
        for a in acts {
            if !delta_a.contains_key(&(*s_a, *a)) {
                issues.push(format!(
                    "delta_A: no row for available action {} in agent state {s_a}",
                    file.actions[a.0]
                ));
            }
        }
    }

    // Environment dynamics.
    let mut env_dyn: Vec<EnvDynamics> = Vec::new();
    for (ai, act) in file.actions.iter().enumerate() {
        let Some(dynf) = file.env_dynamics.get(act) else {
            issues.push(format!("env_dynamics: missing action {act:?}"));
            env_dyn.push(EnvDynamics { components: vec![] });
            continue;
        };
        let mut components = Vec::new();
        let mut wsum = 0.0;
        for (ci, comp) in dynf.components.iter().enumerate() {
            let at = format!("env_dynamics.{act}.components[{ci}]");
            if comp.weight <= 0.0 {
                issues.push(format!("{at}: mixture weight {} must be positive", comp.weight));
            }
            wsum += comp.weight;
            let mut pieces: Vec<(Polytope, AffineMap)> = Vec::new();
            for (pi, pc) in comp.pieces.iter().enumerate() {
                let pat = format!("{at}.pieces[{pi}]");
                let Some(guard) = poly_from_rows(&pc.guard, dim, &pat, &mut issues) else { continue };
                match AffineMap::new(pc.map.m.clone(), pc.map.c.clone()) {
                    Ok(map) => {
                        if map.det().abs() <= EPS_DET {
                            issues.push(format!("{pat}: map is not invertible (|det| = {:.3e})", map.det().abs()));
                        }
                        pieces.push((guard, map));
                    }
                    Err(e) => issues.push(format!("{pat}: {e}")),
                }
            }
            if comp.else_identity {
                match complement_pieces(&domain, &pieces) {
                    Ok(extra) => pieces.extend(extra),
                    Err(e) => issues.push(format!("{at}: complement construction failed: {e}")),
                }
            }
            // Guards restricted to the domain must partition it.
            let clipped: Vec<Polytope> = pieces
                .iter()
                .filter_map(|(g, _)| g.intersect(&domain).ok())
                .collect();
            if dim <= 3 {
                let total: f64 = clipped.iter().filter_map(|p| p.volume().ok()).sum();
                if let Ok(dv) = domain.volume() {
                    if (total - dv).abs() > 1e-6 * dv.max(1.0) {
                        issues.push(format!("{at}: guards cover volume {total} of domain volume {dv}"));
                    }
                }
                for i in 0..clipped.len() {
                    for j in i + 1..clipped.len() {
                        if let Ok(ix) = clipped[i].intersect(&clipped[j]) {
                            if ix.has_interior() {
                                if let Ok(v) = ix.volume() {
                                    if v > geom::EPS_VOL {
                                        issues.push(format!("{at}: guards {i} and {j} overlap with volume {v}"));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            // Image closure: each piece must map its guard into the domain.
            for (pi, (guard, map)) in pieces.iter().enumerate() {
                if let Ok(g) = guard.intersect(&domain) {
                    if g.is_empty() {
                        continue;
                    }
                    if let Ok(img) = g.affine_image(map) {
                        if !contained_in(&img, &domain) {
                            issues.push(format!(
                                "{at}.pieces[{pi}]: image of guard leaves the domain"
                            ));
                        }
                    }
                }
            }
            components.push(EnvComponent { weight: comp.weight, pieces });
        }
        if (wsum - 1.0).abs() > 1e-12 {
            issues.push(format!(
                "env_dynamics.{act}: mixture weights sum to {wsum}, expected 1"
            ));
        }
        let _ = ai;
        env_dyn.push(EnvDynamics { components });
    }

    // Agent state universe: percept support present in the perception FCP.
    let mut agent_states = Vec::new();
    if issues.is_empty() {
        for &loc in &locs {
            let part = perception.partition(loc)?;
            for &per in &pers {
                if part.regions.iter().any(|(_, p)| *p == per) {
                    agent_states.push(AgentState { loc, per });
                }
            }
        }
    }

    // Rewards.
    let all_states: Vec<AgentState> = locs
        .iter()
        .flat_map(|&loc| pers.iter().map(move |&per| AgentState { loc, per }))
        .collect();
    let reward_state = reward_fcp_from_file(&file.reward_state, &domain, dim, &all_states, "reward_state", &mut issues);
    let mut reward_action = Vec::new();
    for act in &file.actions {
        let spec = file.reward_action.get(act);
        let fcp = match spec {
            Some(spec) => reward_fcp_from_file(spec, &domain, dim, &all_states, &format!("reward_action.{act}"), &mut issues),
            None => StateFcp::constant(0.0),
        };
        reward_action.push(fcp);
    }

    // Suggested actions (optional, drives compliance statistics only).
    let suggested = match &file.suggested {
        None => None,
        Some(map) => {
            let mut out = BTreeMap::new();
            for (per, acts) in map {
                match per.parse::<i64>() {
                    Ok(p) => {
                        let ids = resolve_actions(acts, &format!("suggested.{per}"), &mut issues);
                        out.insert(Per(p), ids);
                    }
                    Err(_) => issues.push(format!("suggested: bad percept key {per:?}")),
                }
            }
            Some(out)
        }
    };

    if !issues.is_empty() {
        return Err(ModelError::Validation(issues));
    }

    // Cached products and bounds.
    let mut reward_fcp = Vec::new();
    for a in 0..file.actions.len() {
        reward_fcp.push(reward_action[a].combine(&reward_state, |x, y| x + y)?);
    }
    let perception_fcp = perception.perception_fcp(&agent_states)?;
    let bounds = compute_bounds(&reward_fcp, &agent_states, &available, file.beta);

    Ok(NsPomdpModel {
        locs,
        pers,
        actions: file.actions,
        available,
        delta_a,
        env_dyn,
        perception,
        reward_action,
        reward_state,
        beta: file.beta,
        domain,
        suggested,
        reward_fcp,
        agent_states,
        perception_fcp,
        bounds,
    })
}

fn explicit_fcp(
    regions: &[ExplicitRegion],
    dim: usize,
    pers: &[Per],
    at: &str,
    issues: &mut Vec<String>,
) -> Option<Fcp<Per>> {
    let mut out = Vec::new();
    for (i, r) in regions.iter().enumerate() {
        if !pers.contains(&Per(r.per)) {
            issues.push(format!("{at}.regions[{i}]: unknown percept {}", r.per));
        }
        let poly = poly_from_rows(&r.polytope, dim, &format!("{at}.regions[{i}]"), issues)?;
        out.push((poly, Per(r.per)));
    }
    Some(Fcp::new(out))
}

fn reward_fcp_from_file(
    spec: &RewardFile,
    domain: &Polytope,
    dim: usize,
    all_states: &[AgentState],
    at: &str,
    issues: &mut Vec<String>,
) -> StateFcp {
    // Group entry regions per agent state, then carve the domain remainder
    // into default-valued pieces so every agent state is fully covered.
    let mut per_state: BTreeMap<AgentState, Vec<(Polytope, f64)>> = BTreeMap::new();
    for (i, entry) in spec.entries.iter().enumerate() {
        let Some(region) = poly_from_rows(&entry.region, dim, &format!("{at}.entries[{i}]"), issues) else {
            continue;
        };
        let clipped = match region.intersect(domain) {
            Ok(c) => c,
            Err(e) => {
                issues.push(format!("{at}.entries[{i}]: {e}"));
                continue;
            }
        };
        if !clipped.has_interior() {
            issues.push(format!("{at}.entries[{i}]: region has no interior inside the domain"));
            continue;
        }
        let targets: Vec<AgentState> = match &entry.agent_states {
            None => all_states.to_vec(),
            Some(list) => list.iter().map(|&(l, p)| AgentState::new(l, p)).collect(),
        };
        for s_a in targets {
            per_state.entry(s_a).or_default().push((clipped.clone().pruned(), entry.value));
        }
    }
    let mut by_agent = BTreeMap::new();
    for (s_a, entries) in per_state {
        let mut pieces = entries.clone();
        let mut remainder = vec![domain.clone()];
        for (region, _) in &entries {
            let mut next = Vec::new();
            for q in remainder {
                match geom::convex_difference(&q, region) {
                    Ok(parts) => next.extend(parts),
                    Err(e) => issues.push(format!("{at}: carve failed: {e}")),
                }
            }
            remainder = next;
        }
        for q in remainder {
            pieces.push((q, spec.default));
        }
        by_agent.insert(s_a, pieces);
    }
    StateFcp { by_agent, default: spec.default }
}

fn complement_pieces(
    domain: &Polytope,
    pieces: &[(Polytope, AffineMap)],
) -> Result<Vec<(Polytope, AffineMap)>, GeomError> {
    let dim = domain.dim();
    let mut remainder = vec![domain.clone()];
    for (guard, _) in pieces {
        let mut next = Vec::new();
        for q in remainder {
            next.extend(geom::convex_difference(&q, guard)?);
        }
        remainder = next;
    }
    Ok(remainder
        .into_iter()
        .map(|poly| (poly, AffineMap::identity(dim)))
        .collect())
}

/// `sup n.x over p <= offset` for every domain half-space, within tolerance.
fn contained_in(p: &Polytope, domain: &Polytope) -> bool {
    use crate::lp::{self, LinearProgram, Sense};
    for h in domain.halfspaces() {
        let out = lp::solve(&LinearProgram {
            objective: h.normal.clone(),
            sense: Sense::Maximize,
            constraints: p
                .halfspaces()
                .iter()
                .map(|g| crate::lp::Constraint::new(g.normal.clone(), crate::lp::Relation::Le, g.offset))
                .collect(),
            bounds: None,
        });
        match out {
            Ok(o) if o.status == lp::LpStatus::Optimal => {
                if o.value > h.offset + 1e-7 * (1.0 + h.offset.abs()) {
                    return false;
                }
            }
            Ok(o) if o.status == lp::LpStatus::Infeasible => return true,
            _ => return false,
        }
    }
    true
}

fn compute_bounds(
    reward_fcp: &[StateFcp],
    agent_states: &[AgentState],
    available: &BTreeMap<AgentState, Vec<ActionId>>,
    beta: f64,
) -> GlobalBounds {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut r_lb_num = f64::NEG_INFINITY;
    for a in 0..reward_fcp.len() {
        let mut inf_a = f64::INFINITY;
        let mut seen = false;
        for &s_a in agent_states {
            let pieces = reward_fcp[a].pieces(s_a);
            if pieces.is_empty() {
                inf_a = inf_a.min(reward_fcp[a].default);
                lo = lo.min(reward_fcp[a].default);
                hi = hi.max(reward_fcp[a].default);
                seen = true;
            }
            for (_, v) in pieces {
                inf_a = inf_a.min(*v);
                lo = lo.min(*v);
                hi = hi.max(*v);
                seen = true;
            }
        }
        if seen && available.values().any(|acts| acts.contains(&ActionId(a))) {
            r_lb_num = r_lb_num.max(inf_a);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 0.0;
        r_lb_num = 0.0;
    }
    GlobalBounds {
        l: lo / (1.0 - beta),
        u: hi / (1.0 - beta),
        r_lb: r_lb_num / (1.0 - beta),
    }
}

#[cfg(test)]
pub(crate) mod tests;

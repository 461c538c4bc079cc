//! The agent's perception function and its polyhedral preimage.
//!
//! A perception source per local state is either an explicit polyhedral
//! partition of the environment, or a one-hidden-layer ReLU classifier whose
//! exact preimage is enumerated over hidden activation patterns. Both
//! materialise to the same thing: an ordered `Fcp<Per>` over the environment,
//! with boundary ownership by region order and argmax ties resolved to the
//! smallest percept label.

use crate::geom::{Fcp, GeomError, Halfspace, Polytope};
use crate::ids::{AgentState, Loc, Per};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Activation-pattern enumeration budget.
pub const HIDDEN_BUDGET: usize = 24;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("point outside the perception domain")]
    OutsideDomain,
    #[error("no perception source for local state {0:?}")]
    UnknownLoc(Loc),
    #[error("hidden layer too wide: {0} > {HIDDEN_BUDGET}")]
    BudgetExceeded(usize),
    #[error("unbounded preimage domain")]
    UnboundedDomain,
    #[error("malformed network: {0}")]
    Malformed(String),
    #[error("geometry failure: {0}")]
    Geom(#[from] GeomError),
}

/// Feed-forward classifier with one hidden ReLU layer:
/// `f(x) = W2 . max(0, W1 x + b1) + b2`, class labels attached per output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReluNet {
    #[serde(rename = "e")]
    pub input_dim: usize,
    #[serde(rename = "h")]
    pub hidden_dim: usize,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
    pub labels: Vec<Per>,
}

impl ReluNet {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let (e, h, k) = (self.input_dim, self.hidden_dim, self.labels.len());
        if k < 2 {
            return Err(PerceptionError::Malformed("need at least two classes".into()));
        }
        if self.w1.len() != h || self.w1.iter().any(|r| r.len() != e) || self.b1.len() != h {
            return Err(PerceptionError::Malformed("hidden layer shape mismatch".into()));
        }
        if self.w2.len() != k || self.w2.iter().any(|r| r.len() != h) || self.b2.len() != k {
            return Err(PerceptionError::Malformed("output layer shape mismatch".into()));
        }
        let finite = self
            .w1
            .iter()
            .chain(self.w2.iter())
            .flatten()
            .chain(self.b1.iter())
            .chain(self.b2.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(PerceptionError::Malformed("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self
            .w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).max(0.0))
            .collect();
        self.w2
            .iter()
            .zip(&self.b2)
            .map(|(row, b)| row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Argmax class with ties resolved to the smallest label.
    pub fn classify(&self, x: &[f64]) -> Per {
        let scores = self.forward(x);
        let mut best = 0;
        for i in 1..scores.len() {
            let better = scores[i] > scores[best];
            let tie_smaller = scores[i] == scores[best] && self.labels[i] < self.labels[best];
            if better || tie_smaller {
                best = i;
            }
        }
        self.labels[best]
    }

    pub fn from_json(text: &str) -> Result<Self, PerceptionError> {
        let net: ReluNet = serde_json::from_str(text)
            .map_err(|e| PerceptionError::Malformed(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("net serialises")
    }
}

/// Exact preimage of a one-hidden-layer ReLU classifier over a bounded
/// domain: a partition into polytopes on which the argmax class is constant.
///
/// Depth-first enumeration of hidden activation patterns with feasibility
/// pruning; within each feasible pattern cell the scores are affine, so class
/// regions are cut by pairwise score inequalities. Regions are ordered
/// label-major so that first-containing lookup resolves boundary ties to the
/// smallest label, matching `classify`.
pub fn enumerate_preimage(net: &ReluNet, domain: &Polytope) -> Result<Fcp<Per>, PerceptionError> {
    net.validate()?;
    if net.hidden_dim > HIDDEN_BUDGET {
        return Err(PerceptionError::BudgetExceeded(net.hidden_dim));
    }
    domain.bounding_box().map_err(|e| match e {
        GeomError::Unbounded => PerceptionError::UnboundedDomain,
        other => PerceptionError::Geom(other),
    })?;
    let e = net.input_dim;
    let mut out: Vec<(u64, Per, Polytope)> = Vec::new();
    // pattern entries: Some(bit) for a real split, None for a dead unit
    let mut stack: Vec<(usize, u64, Polytope)> = vec![(0, 0, domain.clone())];
    while let Some((level, pattern, cell)) = stack.pop() {
        if level == net.hidden_dim {
            leaf_regions(net, pattern, &cell, &mut out)?;
            continue;
        }
        let row = &net.w1[level];
        let bias = net.b1[level];
        let row_norm: f64 = row.iter().map(|v| v * v).sum::<f64>();
        if row_norm.sqrt() < 1e-12 {
            // Dead unit: the preactivation is the constant bias; a single
            // canonical branch avoids duplicated cells.
            let bit = if bias > 0.0 { 1 } else { 0 };
            stack.push((level + 1, pattern | (bit << level), cell));
            continue;
        }
        // active branch: w.x + b >= 0
        let mut hs_on = cell.halfspaces().to_vec();
        hs_on.push(Halfspace::new(row.iter().map(|v| -v).collect(), bias));
        let on = Polytope::new(e, hs_on)?;
        if !on.is_empty() {
            stack.push((level + 1, pattern | (1 << level), on));
        }
        // inactive branch: w.x + b <= 0
        let mut hs_off = cell.halfspaces().to_vec();
        hs_off.push(Halfspace::new(row.clone(), -bias));
        let off = Polytope::new(e, hs_off)?;
        if !off.is_empty() {
            stack.push((level + 1, pattern, off));
        }
    }
    out.sort_by_key(|(pattern, per, _)| (*per, *pattern));
    Ok(Fcp::new(out.into_iter().map(|(_, per, poly)| (poly, per)).collect()))
}

fn leaf_regions(
    net: &ReluNet,
    pattern: u64,
    cell: &Polytope,
    out: &mut Vec<(u64, Per, Polytope)>,
) -> Result<(), PerceptionError> {
    let e = net.input_dim;
    let k = net.labels.len();
    // Affine scores within the cell: f_c(x) = a_c . x + d_c.
    let mut a = vec![vec![0.0; e]; k];
    let mut d = net.b2.clone();
    for j in 0..net.hidden_dim {
        if pattern & (1 << j) == 0 {
            continue;
        }
        for c in 0..k {
            let w = net.w2[c][j];
            if w != 0.0 {
                for i in 0..e {
                    a[c][i] += w * net.w1[j][i];
                }
                d[c] += w * net.b1[j];
            }
        }
    }
    // Label-sorted class order so exact duplicates collapse onto the
    // smallest label, per the tie rule.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&c| net.labels[c]);
    for (pos, &c) in order.iter().enumerate() {
        let duplicate = order[..pos].iter().any(|&c2| {
            (d[c] - d[c2]).abs() < 1e-12
                && a[c].iter().zip(&a[c2]).all(|(x, y)| (x - y).abs() < 1e-12)
        });
        if duplicate {
            continue;
        }
        let mut hs = cell.halfspaces().to_vec();
        for &c2 in &order {
            if c2 == c {
                continue;
            }
            // f_c >= f_c2  <=>  (a_c2 - a_c) . x <= d_c - d_c2
            hs.push(Halfspace::new(
                a[c2].iter().zip(&a[c]).map(|(x, y)| x - y).collect(),
                d[c] - d[c2],
            ));
        }
        let region = Polytope::new(e, hs)?;
        if region.has_interior() {
            out.push((pattern, net.labels[c], region.pruned()));
        }
    }
    Ok(())
}

/// Perception source for one local state.
#[derive(Debug, Clone)]
pub enum LocPerception {
    Explicit(Fcp<Per>),
    Network(ReluNet),
}

/// The agent's perception function together with the materialised
/// environment partition per local state.
#[derive(Debug, Clone)]
pub struct PerceptionSpec {
    pub domain: Polytope,
    sources: BTreeMap<Loc, Arc<LocPerception>>,
    partitions: BTreeMap<Loc, Arc<Fcp<Per>>>,
}

impl PerceptionSpec {
    pub fn new(
        sources: BTreeMap<Loc, Arc<LocPerception>>,
        domain: Polytope,
    ) -> Result<Self, PerceptionError> {
        let mut partitions = BTreeMap::new();
        for (loc, src) in &sources {
            let fcp = match src.as_ref() {
                LocPerception::Explicit(fcp) => Arc::new(fcp.clone()),
                LocPerception::Network(net) => Arc::new(enumerate_preimage(net, &domain)?),
            };
            partitions.insert(*loc, fcp);
        }
        Ok(PerceptionSpec { domain, sources, partitions })
    }

    pub fn locs(&self) -> impl Iterator<Item = Loc> + '_ {
        self.sources.keys().copied()
    }

    /// The materialised environment partition for a local state.
    pub fn partition(&self, loc: Loc) -> Result<&Fcp<Per>, PerceptionError> {
        self.partitions
            .get(&loc)
            .map(|p| p.as_ref())
            .ok_or(PerceptionError::UnknownLoc(loc))
    }

    /// Percept at an environment point: explicit sources use first-containing
    /// region order, networks take the forward-pass argmax with smallest-label
    /// ties.
    pub fn observe(&self, loc: Loc, x: &[f64]) -> Result<Per, PerceptionError> {
        if !self.domain.contains(x) {
            return Err(PerceptionError::OutsideDomain);
        }
        match self
            .sources
            .get(&loc)
            .ok_or(PerceptionError::UnknownLoc(loc))?
            .as_ref()
        {
            LocPerception::Explicit(fcp) => fcp
                .lookup(x)
                .map(|(_, per)| *per)
                .ok_or(PerceptionError::OutsideDomain),
            LocPerception::Network(net) => Ok(net.classify(x)),
        }
    }

    /// Environment regions generating a given agent state, in region order.
    pub fn support_regions(&self, s_a: AgentState) -> Result<Vec<&Polytope>, PerceptionError> {
        Ok(self
            .partition(s_a.loc)?
            .regions
            .iter()
            .filter(|(_, per)| *per == s_a.per)
            .map(|(poly, _)| poly)
            .collect())
    }

    /// The perception partition lifted to the product state space: one
    /// region per (agent state, environment polytope) with the unique agent
    /// state as payload.
    pub fn perception_fcp(
        &self,
        agent_states: &[AgentState],
    ) -> Result<Vec<(AgentState, Polytope)>, PerceptionError> {
        let mut out = Vec::new();
        for &s_a in agent_states {
            for poly in self.support_regions(s_a)? {
                out.push((s_a, poly.clone()));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn grid4_partition() -> Fcp<Per> {
        // 4x4 grid over [0,4]^2; cell (i,j) has label (j-1)*4 + i.
        let mut regions = Vec::new();
        for label in 1..=16i64 {
            let i = (label - 1) % 4;
            let j = (label - 1) / 4;
            regions.push((
                Polytope::bounding(&[i as f64, j as f64], &[i as f64 + 1.0, j as f64 + 1.0]),
                Per(label),
            ));
        }
        Fcp::new(regions)
    }

    fn explicit_spec() -> PerceptionSpec {
        let mut sources = BTreeMap::new();
        let fcp = Arc::new(LocPerception::Explicit(grid4_partition()));
        for tr in 1..=5 {
            sources.insert(Loc(tr), fcp.clone());
        }
        PerceptionSpec::new(sources, Polytope::bounding(&[0.0, 0.0], &[4.0, 4.0])).unwrap()
    }

    #[test]
    fn observe_grid_cells() {
        let spec = explicit_spec();
        assert_eq!(spec.observe(Loc(1), &[0.5, 0.5]).unwrap(), Per(1));
        assert_eq!(spec.observe(Loc(3), &[2.5, 3.5]).unwrap(), Per(15));
        assert!(spec.observe(Loc(1), &[5.0, 0.0]).is_err());
    }

    #[test]
    fn network_tie_returns_smallest_label() {
        // duplicated output rows for classes 2 and 3
        let net = ReluNet {
            input_dim: 1,
            hidden_dim: 1,
            w1: vec![vec![1.0]],
            b1: vec![0.0],
            w2: vec![vec![0.0], vec![1.0], vec![1.0]],
            b2: vec![-10.0, 0.0, 0.0],
            labels: vec![Per(1), Per(2), Per(3)],
        };
        assert_eq!(net.classify(&[0.7]), Per(2));
        let fcp = enumerate_preimage(&net, &Polytope::bounding(&[-1.0], &[1.0])).unwrap();
        // class 3 regions are duplicates of class 2 and must be skipped
        assert!(fcp.regions.iter().all(|(_, per)| *per != Per(3)));
    }

    #[test]
    fn constant_net_one_region() {
        let net = ReluNet {
            input_dim: 2,
            hidden_dim: 2,
            w1: vec![vec![0.0, 0.0]; 2],
            b1: vec![0.0, 0.0],
            w2: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            b2: vec![1.0, 0.0],
            labels: vec![Per(1), Per(2)],
        };
        let fcp = enumerate_preimage(&net, &Polytope::bounding(&[0.0, 0.0], &[1.0, 1.0])).unwrap();
        assert_eq!(fcp.len(), 1);
        assert_eq!(fcp.regions[0].1, Per(1));
    }

    #[test]
    fn one_hidden_unit_splits_line() {
        let net = ReluNet {
            input_dim: 1,
            hidden_dim: 1,
            w1: vec![vec![1.0]],
            b1: vec![0.0],
            w2: vec![vec![1.0], vec![-1.0]],
            b2: vec![0.0, 0.0],
            labels: vec![Per(1), Per(2)],
        };
        let domain = Polytope::bounding(&[-1.0], &[1.0]);
        let fcp = enumerate_preimage(&net, &domain).unwrap();
        // Two regions split at x = 0. The scores are (relu(x), -relu(x)),
        // so x > 0 is strictly class 1 and x <= 0 is a tie that the
        // smallest-label rule also sends to class 1; partition lookup and
        // the forward pass agree everywhere.
        assert_eq!(fcp.len(), 2);
        for x in [0.5, -0.5, 0.0, -1.0, 1.0] {
            assert_eq!(*fcp.lookup(&[x]).unwrap().1, net.classify(&[x]));
        }
        assert_eq!(net.classify(&[0.5]), Per(1));
        assert_eq!(net.classify(&[-0.5]), Per(1));
        assert_eq!(net.classify(&[0.0]), Per(1));
    }

    fn random_net(rng: &mut impl Rng, e: usize, h: usize, k: usize) -> ReluNet {
        ReluNet {
            input_dim: e,
            hidden_dim: h,
            w1: (0..h).map(|_| (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            b1: (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            w2: (0..k).map(|_| (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            b2: (0..k).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            labels: (1..=k as i64).map(Per).collect(),
        }
    }

    #[test]
    fn random_net_matches_forward_pass() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let net = random_net(&mut rng, 2, 6, 4);
        let domain = Polytope::bounding(&[0.0, 0.0], &[1.0, 1.0]);
        let fcp = enumerate_preimage(&net, &domain).unwrap();
        let mut checked = 0;
        for _ in 0..10_000 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            // skip samples within tolerance of any region boundary
            let strict: Vec<_> = fcp
                .regions
                .iter()
                .filter(|(p, _)| p.contains_strict(&x, 1e-7))
                .collect();
            if strict.len() != 1 {
                continue;
            }
            assert_eq!(strict[0].1, net.classify(&x));
            checked += 1;
        }
        assert!(checked > 9_000);
    }

    #[test]
    fn preimage_coverage_and_disjointness() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let domain = Polytope::bounding(&[0.0, 0.0], &[1.0, 1.0]);
        for _ in 0..3 {
            let net = random_net(&mut rng, 2, 5, 3);
            let fcp = enumerate_preimage(&net, &domain).unwrap();
            let total = fcp.total_volume().unwrap();
            assert!((total - 1.0).abs() < 1e-6, "coverage {total}");
            for i in 0..fcp.len() {
                for j in i + 1..fcp.len() {
                    let ix = fcp.regions[i].0.intersect(&fcp.regions[j].0).unwrap();
                    if ix.has_interior() {
                        assert!(ix.volume().unwrap() <= 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn budget_guard() {
        let net = ReluNet {
            input_dim: 1,
            hidden_dim: HIDDEN_BUDGET + 1,
            w1: vec![vec![1.0]; HIDDEN_BUDGET + 1],
            b1: vec![0.0; HIDDEN_BUDGET + 1],
            w2: vec![vec![0.0; HIDDEN_BUDGET + 1]; 2],
            b2: vec![0.0, 0.0],
            labels: vec![Per(1), Per(2)],
        };
        assert!(matches!(
            enumerate_preimage(&net, &Polytope::bounding(&[0.0], &[1.0])),
            Err(PerceptionError::BudgetExceeded(_))
        ));
    }

    #[test]
    fn lifted_fcp_counts() {
        let spec = explicit_spec();
        let agent_states: Vec<AgentState> = (1..=5)
            .flat_map(|tr| (1..=16).map(move |per| AgentState::new(tr, per)))
            .collect();
        let lifted = spec.perception_fcp(&agent_states).unwrap();
        assert_eq!(lifted.len(), 80);

        // single-region perception: one region per percept actually present
        let mut sources = BTreeMap::new();
        let whole = Fcp::new(vec![(Polytope::bounding(&[0.0], &[1.0]), Per(7))]);
        sources.insert(Loc(1), Arc::new(LocPerception::Explicit(whole)));
        let spec1 = PerceptionSpec::new(sources, Polytope::bounding(&[0.0], &[1.0])).unwrap();
        let states = [AgentState::new(1, 7), AgentState::new(1, 8)];
        let lifted = spec1.perception_fcp(&states).unwrap();
        assert_eq!(lifted.len(), 1);
    }
}

use super::*;

pub fn model_path(name: &str) -> String {
    format!("{}/../../models/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn load_bundled(name: &str) -> NsPomdpModel {
    let text = std::fs::read_to_string(model_path(name)).expect("bundled model exists");
    load(&text).expect("bundled model loads")
}

#[test]
fn carpark4_shape() {
    let m = load_bundled("carpark4_grid.json");
    assert_eq!(m.locs.len(), 5);
    assert_eq!(m.pers.len(), 16);
    assert_eq!(m.actions.len(), 5);
    assert_eq!(m.agent_states().len(), 80);
    assert_eq!(m.perception_fcp().len(), 80);
    // park available only on the parking percept
    let park = m.action_id("park").unwrap();
    assert!(m.is_available(AgentState::new(1, 15), park));
    assert!(!m.is_available(AgentState::new(1, 14), park));
}

#[test]
fn bad_agent_row_sum_is_reported() {
    let text = std::fs::read_to_string(model_path("carpark4_grid.json")).unwrap();
    let bad = text.replacen("1.0\n", "0.9\n", 1);
    match load(&bad) {
        Err(ModelError::Validation(issues)) => {
            assert!(issues.iter().any(|i| i.contains("delta_A row")), "{issues:?}");
        }
        other => panic!("expected validation failure, got {other:?}"),
    }
}

#[test]
fn bad_mixture_weights_are_reported() {
    let text = std::fs::read_to_string(model_path("carpark4_grid.json")).unwrap();
    let bad = text.replace("\"weight\": 1.0", "\"weight\": 0.5");
    match load(&bad) {
        Err(ModelError::Validation(issues)) => {
            assert!(issues.iter().any(|i| i.contains("mixture weights")), "{issues:?}");
        }
        other => panic!("expected validation failure, got {other:?}"),
    }
}

#[test]
fn successors_compliant_up() {
    let m = load_bundled("carpark4_grid.json");
    let up = m.action_id("up").unwrap();
    let s_a = AgentState::new(1, 1);
    let succ = m.successors((&s_a, &[0.5, 0.5]), up).unwrap();
    assert_eq!(succ.len(), 1);
    let ((s_a2, y), p) = &succ[0];
    assert_eq!(*s_a2, AgentState::new(2, 5));
    assert!((y[0] - 0.5).abs() < 1e-12 && (y[1] - 1.5).abs() < 1e-12);
    assert!((p - 1.0).abs() < 1e-12);
}

#[test]
fn successors_noncompliant_left_clamps() {
    let m = load_bundled("carpark4_grid.json");
    let left = m.action_id("left").unwrap();
    let s_a = AgentState::new(1, 1);
    // left is not suggested for percept 1 and trust 1 stays put; the move
    // would exit the grid so the position stays as well.
    let succ = m.successors((&s_a, &[0.5, 0.5]), left).unwrap();
    assert_eq!(succ.len(), 1);
    let ((s_a2, y), p) = &succ[0];
    assert_eq!(*s_a2, AgentState::new(1, 1));
    assert!((y[0] - 0.5).abs() < 1e-12 && (y[1] - 0.5).abs() < 1e-12);
    assert!((p - 1.0).abs() < 1e-12);
}

#[test]
fn unavailable_action_rejected() {
    let m = load_bundled("carpark4_grid.json");
    let park = m.action_id("park").unwrap();
    let s_a = AgentState::new(1, 1);
    assert!(matches!(
        m.successors((&s_a, &[0.5, 0.5]), park),
        Err(ModelError::UnavailableAction(..))
    ));
    assert!(matches!(
        m.reward((&s_a, &[0.5, 0.5]), park),
        Err(ModelError::UnavailableAction(..))
    ));
}

#[test]
fn reward_examples() {
    let m = load_bundled("carpark4_grid.json");
    let s15 = AgentState::new(1, 15);
    let s1 = AgentState::new(1, 1);
    for a in m.available(s15) {
        assert_eq!(m.reward((&s15, &[2.5, 3.5]), *a).unwrap(), 1000.0);
    }
    for a in m.available(s1) {
        assert_eq!(m.reward((&s1, &[0.5, 0.5]), *a).unwrap(), 0.0);
    }
    let obst = load_bundled("carpark4_grid_obstacle.json");
    let s6 = AgentState::new(1, 6);
    let up = obst.action_id("up").unwrap();
    assert_eq!(obst.reward((&s6, &[1.5, 1.5]), up).unwrap(), -1000.0);
}

#[test]
fn global_bounds_examples() {
    let m = load_bundled("carpark4_grid.json");
    let b = m.global_bounds();
    assert!((b.l - 0.0).abs() < 1e-9);
    assert!((b.u - 5000.0).abs() < 1e-9);
    assert!((b.r_lb - 0.0).abs() < 1e-9);

    let obst = load_bundled("carpark4_grid_obstacle_m5000.json");
    let b = obst.global_bounds();
    assert!((b.l + 25000.0).abs() < 1e-9);
    assert!((b.u - 5000.0).abs() < 1e-9);
    assert!((b.r_lb + 25000.0).abs() < 1e-9);

    let obst1k = load_bundled("carpark4_grid_obstacle.json");
    let b = obst1k.global_bounds();
    assert!((b.l + 5000.0).abs() < 1e-9);
    assert!((b.u - 5000.0).abs() < 1e-9);
}

#[test]
fn probability_conservation_random_states() {
    use rand::{Rng, SeedableRng};
    let m = load_bundled("carpark4_grid.json");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..1000 {
        let x = [rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)];
        let loc = Loc(rng.gen_range(1..=5));
        let per = m.perception.observe(loc, &x).unwrap();
        let s_a = AgentState { loc, per };
        let acts = m.available(s_a);
        let a = acts[rng.gen_range(0..acts.len())];
        let succ = m.successors((&s_a, &x), a).unwrap();
        let total: f64 = succ.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // every successor is percept compatible by construction
        for ((s_a2, y), _) in &succ {
            assert_eq!(m.perception.observe(s_a2.loc, y).unwrap(), s_a2.per);
        }
    }
}

#[test]
fn toy3d_loads_and_moves() {
    let m = load_bundled("toy3d_vcas_like.json");
    assert_eq!(m.domain.dim(), 3);
    let level = m.action_id("level").unwrap();
    let s_a = AgentState::new(1, m.perception.observe(Loc(1), &[500.0, 0.0, 10.0]).unwrap().0);
    let succ = m.successors((&s_a, &[500.0, 0.0, 10.0]), level).unwrap();
    assert_eq!(succ.len(), 1);
    let ((_, y), _) = &succ[0];
    // h' = h - (hdot - 30), hdot' = hdot, t' = t - 1
    assert!((y[0] - 530.0).abs() < 1e-9);
    assert!((y[1] - 0.0).abs() < 1e-9);
    assert!((y[2] - 9.0).abs() < 1e-9);
}

#[test]
fn toy3d_clamps_at_time_zero() {
    let m = load_bundled("toy3d_vcas_like.json");
    let level = m.action_id("level").unwrap();
    let x = [500.0, 0.0, 0.5];
    let s_a = AgentState::new(1, m.perception.observe(Loc(1), &x).unwrap().0);
    let succ = m.successors((&s_a, &x), level).unwrap();
    assert_eq!(succ.len(), 1);
    let ((_, y), _) = &succ[0];
    assert_eq!(y, &x);
}

#[test]
fn transition_witness_signatures_per_region() {
    // States sampled in one region of the product of the perception and
    // reward partitions reach the same perception regions with the same
    // aggregate probabilities.
    let m = load_bundled("carpark4_grid.json");
    for a in m.action_ids() {
        for (s_a, poly) in m.perception_fcp().iter().take(20) {
            if !m.is_available(*s_a, a) {
                continue;
            }
            for (reward_poly, _) in m.reward_fcp(a).pieces(*s_a) {
                let cell = match poly.intersect(reward_poly) {
                    Ok(c) if c.has_interior() => c,
                    _ => continue,
                };
                let mut signature: Option<BTreeMap<AgentState, i64>> = None;
                for k in 0..10 {
                    let x = sample_interior(&cell, k);
                    let succ = m.successors((&s_a.clone(), &x), a).unwrap();
                    let mut sig: BTreeMap<AgentState, i64> = BTreeMap::new();
                    for ((s_a2, _), p) in succ {
                        *sig.entry(s_a2).or_insert(0) += (p / 1e-9).round() as i64;
                    }
                    match &signature {
                        None => signature = Some(sig),
                        Some(prev) => assert_eq!(prev, &sig),
                    }
                }
            }
        }
    }
}

pub fn sample_interior(poly: &Polytope, salt: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed ^ salt);
    let center = poly.interior_point().expect("nonempty");
    let (lo, hi) = poly.bounding_box().expect("bounded");
    for _ in 0..64 {
        let x: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(&l, &h)| if h > l { rng.gen_range(l..h) } else { l })
            .collect();
        // shrink toward the interior point until strictly inside
        for t in [1.0, 0.5, 0.25, 0.1] {
            let y: Vec<f64> = x
                .iter()
                .zip(&center)
                .map(|(xi, ci)| ci + t * (xi - ci))
                .collect();
            if poly.contains_strict(&y, 1e-7) {
                return y;
            }
        }
    }
    center
}

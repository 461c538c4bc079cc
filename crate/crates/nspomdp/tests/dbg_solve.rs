use nspomdp::belief::{Belief, ParticleBelief};
use nspomdp::hsvi::{solve, SolveConfig, SolveStatus};
use nspomdp::ids::AgentState;

#[test]
fn carpark_converges() {
    let text = std::fs::read_to_string(format!("{}/../../models/carpark4_grid.json", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let m = nspomdp::model::load(&text).unwrap();
    let per = m.perception.observe(nspomdp::ids::Loc(1), &[2.5, 0.5]).unwrap();
    let b0 = Belief::Particles(ParticleBelief {
        agent_state: AgentState { loc: nspomdp::ids::Loc(1), per },
        particles: vec![(vec![2.5, 0.5], 1.0)],
    });
    let t0 = std::time::Instant::now();
    let out = solve(&m, &b0, &SolveConfig { epsilon: 1e-3, ..Default::default() }).unwrap();
    let (lb, _) = out.bounds.lower.value(&b0).unwrap();
    let ub = out.bounds.upper.value(&b0).unwrap();
    println!("status {:?} iters {} gap {:.6} lb {:.6} ub {:.6} gamma {} upsilon {} elapsed {:?}",
        out.status, out.iterations, out.gap, lb, ub, out.bounds.lower.gamma.len(), out.bounds.upper.len(), t0.elapsed());
    assert_eq!(out.status, SolveStatus::Converged);
    assert!(lb >= 2560.0 - 1e-3 && lb <= 2560.0 + 1e-3);
    assert!(ub >= 2560.0 - 1e-3 && ub <= 2560.0 + 1e-3);
}

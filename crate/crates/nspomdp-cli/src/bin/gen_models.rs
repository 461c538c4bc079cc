//! Regenerates the bundled model files under `models/`.
//!
//! The car-parking family: a vehicle on a square grid world with five trust
//! levels, movement actions that clamp at the boundary, a percept per grid
//! cell, suggested actions steering toward the parking spot, and a reward for
//! sitting in the spot (plus obstacle penalties in the variants). The 3-D
//! model exercises the same schema with affine non-translation dynamics and a
//! slab perception partition.

use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use std::fs;
use std::path::Path;

fn box_rows(lo: &[f64], hi: &[f64]) -> Value {
    let mut rows = Vec::new();
    for i in 0..lo.len() {
        let mut neg = vec![0.0; lo.len() + 1];
        neg[i] = -1.0;
        neg[lo.len()] = -lo[i];
        rows.push(neg);
        let mut pos = vec![0.0; lo.len() + 1];
        pos[i] = 1.0;
        pos[lo.len()] = hi[i];
        rows.push(pos);
    }
    json!(rows)
}

/// Suggested actions for a grid cell, guiding toward the parking cells.
/// Mirrors the published 4x4 advisory table and extends it to any grid size:
/// columns left of the spot push up/right, the spot's column pushes up, the
/// columns right of it push up/left; the top row points sideways at the spot
/// and the spot itself suggests parking.
fn suggested_for(i: i64, j: i64, n: i64, spot_lo: i64, spot_hi: i64) -> Vec<&'static str> {
    if j == n {
        if i >= spot_lo && i <= spot_hi {
            vec!["park"]
        } else if i < spot_lo {
            vec!["right"]
        } else {
            vec!["left"]
        }
    } else if i < spot_lo {
        vec!["up", "right"]
    } else if i > spot_hi {
        vec!["up", "left"]
    } else {
        vec!["up"]
    }
}

fn carpark(n: i64, spot_lo: i64, spot_hi: i64, obstacles: &[( [f64; 2], [f64; 2], f64 )]) -> Value {
    let acts = ["up", "down", "left", "right", "park"];
    let dirs: [(&str, f64, f64); 4] =
        [("up", 0.0, 1.0), ("down", 0.0, -1.0), ("left", -1.0, 0.0), ("right", 1.0, 0.0)];
    let nf = n as f64;
    let pers: Vec<i64> = (1..=n * n).collect();
    let park_pers: Vec<i64> = (spot_lo..=spot_hi).map(|i| (n - 1) * n + i).collect();

    let mut suggested = serde_json::Map::new();
    for &per in &pers {
        let i = (per - 1) % n + 1;
        let j = (per - 1) / n + 1;
        suggested.insert(per.to_string(), json!(suggested_for(i, j, n, spot_lo, spot_hi)));
    }

    let mut delta_a = Vec::new();
    for tr in 1..=5i64 {
        for &per in &pers {
            let sugg = suggested[&per.to_string()].as_array().unwrap();
            for act in acts {
                if act == "park" && !park_pers.contains(&per) {
                    continue;
                }
                let compliant = sugg.iter().any(|v| v == act);
                let rows: Vec<(i64, f64)> = if compliant {
                    if tr <= 4 { vec![(tr + 1, 1.0)] } else { vec![(tr, 1.0)] }
                } else if tr >= 2 {
                    vec![(tr - 1, 0.5), (tr, 0.5)]
                } else {
                    vec![(tr, 1.0)]
                };
                for (tr2, p) in rows {
                    delta_a.push(json!([[tr, per], act, tr2, p]));
                }
            }
        }
    }

    let mut dynamics = serde_json::Map::new();
    for (act, dx, dy) in dirs {
        // guard: points whose move stays inside [0,n]^2
        let lo = [(-dx).max(0.0), (-dy).max(0.0)];
        let hi = [(nf - dx).min(nf), (nf - dy).min(nf)];
        dynamics.insert(
            act.to_string(),
            json!({"components": [{"weight": 1.0, "pieces": [
                {"guard": box_rows(&lo, &hi), "map": {"m": [[1.0, 0.0], [0.0, 1.0]], "c": [dx, dy]}}
            ], "else_identity": true}]}),
        );
    }
    dynamics.insert(
        "park".to_string(),
        json!({"components": [{"weight": 1.0, "pieces": [
            {"guard": box_rows(&[0.0, 0.0], &[nf, nf]), "map": {"m": [[1.0, 0.0], [0.0, 1.0]], "c": [0.0, 0.0]}}
        ]}]}),
    );

    let mut regions = Vec::new();
    for &per in &pers {
        let i = ((per - 1) % n) as f64;
        let j = ((per - 1) / n) as f64;
        regions.push(json!({"per": per, "polytope": box_rows(&[i, j], &[i + 1.0, j + 1.0])}));
    }

    let mut reward_entries = vec![json!({
        "value": 1000.0,
        "region": box_rows(&[spot_lo as f64 - 1.0, nf - 1.0], &[spot_hi as f64, nf])
    })];
    for (lo, hi, value) in obstacles {
        reward_entries.push(json!({"value": value, "region": box_rows(lo, hi)}));
    }

    json!({
        "locs": [1, 2, 3, 4, 5],
        "pers": pers,
        "actions": acts,
        "available": {
            "default": ["up", "down", "left", "right"],
            "overrides": park_pers.iter().map(|p| json!({"per": p, "actions": acts})).collect::<Vec<_>>()
        },
        "delta_A": delta_a,
        "env_dynamics": dynamics,
        "perception": {"type": "explicit", "regions": regions},
        "reward_action": {},
        "reward_state": {"default": 0.0, "entries": reward_entries},
        "beta": 0.8,
        "domain": box_rows(&[0.0, 0.0], &[nf, nf]),
        "suggested": suggested,
    })
}

fn toy3d() -> Value {
    // State (h, hdot, t); per-second dynamics h' = h - (hdot - 30) - 0.5 u,
    // hdot' = hdot + u, t' = t - 1, clamped to the domain box.
    let actions = [("descend", -7.33), ("level", 0.0), ("climb", 7.33)];
    let mut dynamics = serde_json::Map::new();
    for (act, u) in actions {
        let guard = json!([
            [1.0, -1.0, 0.0, 1970.0 + 0.5 * u],
            [-1.0, 1.0, 0.0, 2030.0 - 0.5 * u],
            [0.0, 1.0, 0.0, 50.0 - u],
            [0.0, -1.0, 0.0, 50.0 + u],
            [0.0, 0.0, 1.0, 21.0],
            [0.0, 0.0, -1.0, -1.0]
        ]);
        dynamics.insert(
            act.to_string(),
            json!({"components": [{"weight": 1.0, "pieces": [
                {"guard": guard, "map": {
                    "m": [[1.0, -1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                    "c": [30.0 - 0.5 * u, u, -1.0]
                }}
            ], "else_identity": true}]}),
        );
    }

    // Percepts: three relative-altitude slabs crossed with two time slabs.
    let mut regions = Vec::new();
    let h_slabs = [(-2000.0, -100.0), (-100.0, 100.0), (100.0, 2000.0)];
    let t_slabs = [(0.0, 10.0), (10.0, 20.0)];
    for (ti, &(t0, t1)) in t_slabs.iter().enumerate() {
        for (hi, &(h0, h1)) in h_slabs.iter().enumerate() {
            let per = (ti * 3 + hi + 1) as i64;
            regions.push(json!({
                "per": per,
                "polytope": box_rows(&[h0, -50.0, t0], &[h1, 50.0, t1])
            }));
        }
    }

    let mut delta_a = Vec::new();
    for tr in 1..=2i64 {
        for per in 1..=6i64 {
            for (act, _) in actions {
                if act == "climb" && tr == 1 {
                    delta_a.push(json!([[tr, per], act, 1, 0.5]));
                    delta_a.push(json!([[tr, per], act, 2, 0.5]));
                } else {
                    delta_a.push(json!([[tr, per], act, tr, 1.0]));
                }
            }
        }
    }

    json!({
        "locs": [1, 2],
        "pers": [1, 2, 3, 4, 5, 6],
        "actions": ["descend", "level", "climb"],
        "available": {"default": ["descend", "level", "climb"]},
        "delta_A": delta_a,
        "env_dynamics": dynamics,
        "perception": {"type": "explicit", "regions": regions},
        "reward_action": {},
        "reward_state": {"default": 0.0, "entries": [
            {"value": -1000.0, "region": box_rows(&[-100.0, -50.0, 0.0], &[100.0, 50.0, 1.0])}
        ]},
        "beta": 0.75,
        "domain": box_rows(&[-2000.0, -50.0, 0.0], &[2000.0, 50.0, 20.0]),
    })
}

fn demo_net() -> Value {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let (e, h, k) = (2usize, 6usize, 4usize);
    let mat = |r: usize, c: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..r)
            .map(|_| (0..c).map(|_| (rng.gen_range(-100..100) as f64) / 50.0).collect())
            .collect()
    };
    let w1 = mat(h, e, &mut rng);
    let b1: Vec<f64> = (0..h).map(|_| (rng.gen_range(-100..100) as f64) / 50.0).collect();
    let w2 = mat(k, h, &mut rng);
    let b2: Vec<f64> = (0..k).map(|_| (rng.gen_range(-50..50) as f64) / 50.0).collect();
    json!({"e": e, "h": h, "W1": w1, "b1": b1, "W2": w2, "b2": b2, "labels": [1, 2, 3, 4]})
}

fn main() {
    let root = std::env::args().nth(1).unwrap_or_else(|| "models".to_string());
    let root = Path::new(&root);
    fs::create_dir_all(root.join("nets")).expect("create models dir");
    let files: Vec<(&str, Value)> = vec![
        ("carpark4_grid.json", carpark(4, 3, 3, &[])),
        ("carpark4_grid_obstacle.json", carpark(4, 3, 3, &[([1.0, 1.0], [2.0, 2.0], -1000.0)])),
        ("carpark4_grid_obstacle_m5000.json", carpark(4, 3, 3, &[([1.0, 1.0], [2.0, 2.0], -5000.0)])),
        (
            "carpark8_grid_obstacles.json",
            carpark(
                8,
                7,
                8,
                &[
                    ([4.0, 0.0], [5.0, 1.0], -1000.0),
                    ([7.0, 2.0], [8.0, 3.0], -1000.0),
                    ([4.0, 4.0], [5.0, 5.0], -1000.0),
                    ([2.0, 7.0], [4.0, 8.0], -1000.0),
                ],
            ),
        ),
        ("toy3d_vcas_like.json", toy3d()),
        ("nets/demo_net.json", demo_net()),
    ];
    for (name, value) in files {
        let path = root.join(name);
        let text = serde_json::to_string_pretty(&value).unwrap();
        fs::write(&path, text + "\n").expect("write model");
        println!("wrote {}", path.display());
    }
}

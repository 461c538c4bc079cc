//! Command-line front end: model solving, strategy simulation, perception
//! preimage generation, and plot-ready value-map exports.
//!
//! Exit codes: 0 success, 2 validation or parse error, 3 budget exhaustion
//! (the final gap is printed), 1 anything else. Diagnostics are single-line
//! and machine parsable on stderr as `error: <kind>: <message>`.

mod persist;

use clap::{Parser, Subcommand};
use nspomdp::belief::{self, Belief};
use nspomdp::hsvi::{self, SolveConfig, SolveStatus};
use nspomdp::model::NsPomdpModel;
use nspomdp::oracle;
use nspomdp::perception::{enumerate_preimage, ReluNet};
use nspomdp::strategy::{simulate, LookaheadStrategy};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nspomdp", about = "Solver for neuro-symbolic POMDPs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute lower/upper bounds on the value of an initial belief.
    Solve {
        #[arg(long)]
        model: String,
        #[arg(long)]
        belief: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-iteration trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Persist the computed bounds into this directory.
        #[arg(long)]
        dump_alphas: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        max_iterations: usize,
        /// Run region backups in parallel (bounded by NSPOMDP_THREADS).
        #[arg(long, default_value_t = false)]
        parallel: bool,
    },
    /// Roll out the one-step lookahead strategy from persisted bounds.
    Simulate {
        #[arg(long)]
        model: String,
        /// Bounds directory written by `solve --dump-alphas`.
        #[arg(long)]
        bounds: Option<PathBuf>,
        #[arg(long)]
        belief: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Solve in-process to this accuracy instead of loading bounds.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Enumerate the polyhedral preimage of a ReLU classifier.
    Preimage {
        #[arg(long)]
        net: PathBuf,
        /// Box domain as comma-separated `lo,hi` pairs per dimension.
        #[arg(long)]
        domain: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the pointwise maximum of the persisted alpha-functions as a
    /// polygon dump (2-D models).
    ExportValues {
        #[arg(long)]
        bounds: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        /// Use only the first N alpha-functions (0 = all).
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
    /// Finite-horizon brute-force value of a particle belief.
    Oracle {
        #[arg(long)]
        model: String,
        #[arg(long)]
        belief: PathBuf,
        #[arg(long)]
        horizon: usize,
    },
}

enum CliError {
    Validation(String),
    Budget(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    fn report(&self) {
        let (kind, msg) = match self {
            CliError::Validation(m) => ("validation", m),
            CliError::Budget(m) => ("budget", m),
            CliError::Io(m) => ("io", m),
        };
        eprintln!("error: {kind}: {}", msg.replace('\n', "; "));
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn io_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

/// Model files can be given as a path or a bundled model name.
fn resolve_model_path(arg: &str) -> PathBuf {
    let direct = PathBuf::from(arg);
    if direct.exists() {
        return direct;
    }
    for cand in [format!("{arg}.json"), format!("models/{arg}.json")] {
        let p = PathBuf::from(cand);
        if p.exists() {
            return p;
        }
    }
    direct
}

fn load_model(arg: &str) -> Result<NsPomdpModel, CliError> {
    let path = resolve_model_path(arg);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    nspomdp::model::load(&text).map_err(validation)
}

fn load_belief(path: &Path, model: &NsPomdpModel) -> Result<Belief, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    belief::from_json(&text, model).map_err(validation)
}

fn main() -> ExitCode {
    env_logger::init();
    if let Ok(threads) = std::env::var("NSPOMDP_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { model, belief, epsilon, seed, trace, dump_alphas, max_iterations, parallel } => {
            let m = load_model(&model)?;
            let b0 = load_belief(&belief, &m)?;
            let config = SolveConfig {
                epsilon,
                max_iterations,
                rng_seed: seed,
                parallel_ispp: parallel,
                ..Default::default()
            };
            let out = hsvi::solve(&m, &b0, &config).map_err(validation)?;
            let (lb, _) = out.bounds.lower.value(&b0).map_err(validation)?;
            let ub = out.bounds.upper.value(&b0).map_err(validation)?;
            if let Some(path) = trace {
                let mut f = std::fs::File::create(&path).map_err(io_err)?;
                hsvi::write_trace_csv(&mut f, &out.trace).map_err(io_err)?;
            }
            if let Some(dir) = dump_alphas {
                persist::write_bounds(&dir, &m, &out.bounds).map_err(io_err)?;
            }
            println!("lb {lb} ub {ub} gap {} iters {}", out.gap, out.iterations);
            if out.status == SolveStatus::BudgetExhausted {
                return Err(CliError::Budget(format!(
                    "iteration budget exhausted with gap {}",
                    out.gap
                )));
            }
            Ok(())
        }
        Command::Simulate { model, bounds, belief, runs, horizon, seed, out, epsilon } => {
            let m = load_model(&model)?;
            let b0 = load_belief(&belief, &m)?;
            let lower = match (&bounds, epsilon) {
                (Some(dir), _) => persist::read_lower_bound(dir, &m).map_err(validation)?,
                (None, Some(eps)) => {
                    let config = SolveConfig { epsilon: eps, ..Default::default() };
                    hsvi::solve(&m, &b0, &config).map_err(validation)?.bounds.lower
                }
                (None, None) => {
                    return Err(CliError::Validation(
                        "simulate needs --bounds DIR or --epsilon E".into(),
                    ))
                }
            };
            let strat = LookaheadStrategy::new(&m, &lower);
            let mut file = std::fs::File::create(&out).map_err(io_err)?;
            let mut returns = Vec::with_capacity(runs);
            for run_idx in 0..runs {
                let true_state = sample_true_state(&b0, seed, run_idx as u64);
                let path = simulate(&m, &strat, &b0, true_state, horizon, seed, run_idx as u64)
                    .map_err(validation)?;
                nspomdp::strategy::write_path_csv(&mut file, &m, &path, m.beta).map_err(io_err)?;
                let stats = match path.compliance {
                    Some(c) => format!(" compliance {c:.3} mean_trust {:.3}", path.mean_loc),
                    None => String::new(),
                };
                println!("run {run_idx} return {}{stats}", path.discounted_return);
                returns.push(path.discounted_return);
            }
            let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
            let gb = m.global_bounds();
            let truncation = m.beta.powi(horizon as i32) * (gb.u - gb.l);
            println!("mean_return {mean} truncation_error {truncation}");
            Ok(())
        }
        Command::Preimage { net, domain, out } => {
            let text = std::fs::read_to_string(&net).map_err(io_err)?;
            let net = ReluNet::from_json(&text).map_err(validation)?;
            let bounds: Vec<f64> = domain
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Validation(format!("bad --domain: {e}")))?;
            if bounds.len() != 2 * net.input_dim {
                return Err(CliError::Validation(format!(
                    "--domain needs {} numbers for input dimension {}",
                    2 * net.input_dim,
                    net.input_dim
                )));
            }
            let lo: Vec<f64> = bounds.iter().step_by(2).copied().collect();
            let hi: Vec<f64> = bounds.iter().skip(1).step_by(2).copied().collect();
            let domain = nspomdp::geom::Polytope::bounding(&lo, &hi);
            let fcp = enumerate_preimage(&net, &domain).map_err(validation)?;
            let mut file = std::fs::File::create(&out).map_err(io_err)?;
            for (poly, per) in &fcp.regions {
                nspomdp::geom::write_polygon_line(&mut file, &per.0.to_string(), poly, per.0 as f64)
                    .map_err(validation)?;
            }
            let total = fcp.total_volume().map_err(validation)?;
            let dv = domain.volume().map_err(validation)?;
            println!("regions {} coverage {total} domain {dv}", fcp.len());
            Ok(())
        }
        Command::ExportValues { bounds, model, out, sample } => {
            let m = load_model(&model)?;
            persist::export_value_map(&bounds, &m, &out, sample).map_err(validation)?;
            Ok(())
        }
        Command::Oracle { model, belief, horizon } => {
            let m = load_model(&model)?;
            let b0 = load_belief(&belief, &m)?;
            let Belief::Particles(pb) = &b0 else {
                return Err(CliError::Validation(
                    "the oracle unrolls particle beliefs only".into(),
                ));
            };
            match oracle::finite_horizon_value(&m, pb, horizon, oracle::DEFAULT_NODE_BUDGET) {
                Ok(v) => {
                    println!(
                        "value {} bracket_lo {} bracket_hi {} horizon {}",
                        v.value, v.bracket.0, v.bracket.1, v.horizon
                    );
                    Ok(())
                }
                Err(oracle::OracleError::BudgetExceeded(n)) => {
                    Err(CliError::Budget(format!("oracle node budget exceeded at {n} nodes")))
                }
                Err(e) => Err(validation(e)),
            }
        }
    }
}

/// Draw the true initial state from the belief, seeded per run.
fn sample_true_state(b0: &Belief, seed: u64, run_idx: u64) -> (nspomdp::ids::AgentState, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xc0ffee).wrapping_add(run_idx));
    match b0 {
        Belief::Particles(pb) => {
            let mut u: f64 = rng.gen();
            let mut pick = pb.particles.last().expect("nonempty").0.clone();
            for (x, w) in &pb.particles {
                if u < *w {
                    pick = x.clone();
                    break;
                }
                u -= w;
            }
            (pb.agent_state, pick)
        }
        Belief::Regions(rb) => {
            // pick a region by mass, then rejection-sample a point inside
            let masses: Vec<f64> = rb
                .regions
                .iter()
                .map(|(p, w)| w * p.volume().unwrap_or(0.0))
                .collect();
            let total: f64 = masses.iter().sum();
            let mut u: f64 = rng.gen::<f64>() * total;
            let mut idx = rb.regions.len() - 1;
            for (i, mass) in masses.iter().enumerate() {
                if u < *mass {
                    idx = i;
                    break;
                }
                u -= mass;
            }
            let poly = &rb.regions[idx].0;
            let (lo, hi) = poly.bounding_box().expect("bounded");
            for _ in 0..10_000 {
                let x: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(&l, &h)| if h > l { rng.gen_range(l..h) } else { l })
                    .collect();
                if poly.contains(&x) {
                    return (rb.agent_state, x);
                }
            }
            (rb.agent_state, poly.interior_point().expect("nonempty"))
        }
    }
}

// referenced by sample_true_state through Loc-typed agent states
#[allow(unused)]
fn _loc_witness(l: Loc) {}

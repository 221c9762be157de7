//! Policy tuning: latent vectors are mapped to policies, scored by running
//! the optimizer, and improved with a particle swarm. Good trajectories go
//! into a [`PathStore`] and later evaluations restart from their tails.

mod mapping;
mod pso;
mod store;

pub use mapping::{
    control_names, policy_mapping, LatentVector, MappingEntry, MappingSpec, Transform, BOX_HI,
    BOX_LO,
};
pub use pso::{pso_optimize, ParticleSwarm, PsoParams};
pub use store::{restart_index, set_up_new_init, PathStore};

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parity::{ParityMatrix, SignatureTensor};
use crate::policy::Policy;
use crate::search::{optimize_beam, restart_seed, SearchBudget, Trajectory};

/// Added when a run started from a stored state ends no lower than it.
pub const STORE_PENALTY: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitnessReport {
    pub rho: usize,
    pub density: f64,
    pub penalty: f64,
    /// `rho + density + penalty`, or `+∞` when invalid.
    pub fitness: f64,
    /// The final matrix has the reference tensor.
    pub valid: bool,
}

/// Scores a final matrix: `ρ + ones/(n·ρ) + penalty`.
pub fn fitness(
    p_final: &ParityMatrix,
    started_from_store: bool,
    start_rho: usize,
    tensor_ref: &SignatureTensor,
) -> FitnessReport {
    let rho = p_final.column_count();
    let density = p_final.density();
    let penalty = if started_from_store && rho >= start_rho {
        STORE_PENALTY
    } else {
        0.0
    };
    let valid = p_final.signature_tensor() == *tensor_ref;
    FitnessReport {
        rho,
        density,
        penalty,
        fitness: if valid {
            rho as f64 + density + penalty
        } else {
            f64::INFINITY
        },
        valid,
    }
}

/// Limits for one optimizer run inside the tuner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBudget {
    pub max_iterations: Option<u64>,
    pub max_matrix_evals: Option<u64>,
    pub wall_clock_secs: Option<f64>,
}

impl Default for EvalBudget {
    fn default() -> Self {
        Self {
            max_iterations: Some(1000),
            max_matrix_evals: None,
            wall_clock_secs: None,
        }
    }
}

impl EvalBudget {
    fn to_search(self) -> Result<SearchBudget> {
        let wall = match self.wall_clock_secs {
            Some(s) if !(s > 0.0 && s.is_finite()) => {
                return Err(Error::Config(format!("wall_clock_secs must be positive, got {s}")))
            }
            Some(s) => Some(Duration::from_secs_f64(s)),
            None => None,
        };
        let b = SearchBudget {
            wall_clock_limit: wall,
            max_matrix_evals: self.max_matrix_evals,
            max_iterations: self.max_iterations,
        };
        b.validate()?;
        Ok(b)
    }
}

/// Everything `tune` needs besides the benchmark and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerConfig {
    pub mapping: MappingSpec,
    /// Controls not named in `mapping` keep these values.
    pub base_policy: Policy,
    pub swarm: usize,
    pub iterations: usize,
    /// Seeded runs per latent vector; the objective is their minimum.
    pub repetitions: usize,
    /// Store restarts per fresh start once the store is non-empty.
    pub restarts_per_fresh: usize,
    pub per_eval: EvalBudget,
    /// Overall limit; checked between swarm rounds.
    pub wall_clock_secs: Option<f64>,
    pub pso: PsoParams,
    /// Directory of the persistent path store.
    pub store: Option<PathBuf>,
    pub leaderboard_size: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            mapping: default_mapping(),
            base_policy: Policy::default(),
            swarm: 8,
            iterations: 10,
            repetitions: 3,
            restarts_per_fresh: 3,
            per_eval: EvalBudget::default(),
            wall_clock_secs: None,
            pso: PsoParams::default(),
            store: None,
            leaderboard_size: 10,
        }
    }
}

/// A small mapping over the controls that matter most in practice.
pub fn default_mapping() -> MappingSpec {
    let e = |control: &str, transform| MappingEntry {
        control: control.into(),
        transform,
        rank_thr: None,
    };
    MappingSpec {
        entries: vec![
            e("temperature", Transform::ExpScale { lo: 1e-3, hi: 1.0 }),
            e("num_samples", Transform::RoundToInt { lo: 16.0, hi: 512.0 }),
            e("min_z_to_research", Transform::RoundToInt { lo: 4.0, hi: 96.0 }),
            e("pool_weights.0", Transform::Affine { lo: 0.0, hi: 2.0 }),
            e("pool_weights.3", Transform::Affine { lo: -1.0, hi: 1.0 }),
            e("final_weights.0", Transform::Affine { lo: 0.0, hi: 2.0 }),
            e("final_weights.5", Transform::Affine { lo: -1.0, hi: 1.0 }),
        ],
    }
}

impl TunerConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: TunerConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.mapping.validate()?;
        self.base_policy.validate()?;
        if self.mapping.dim() == 0 {
            return Err(Error::Config("mapping needs at least one entry".into()));
        }
        if self.swarm < 2 || self.iterations == 0 || self.repetitions == 0 {
            return Err(Error::Config(
                "need swarm ≥ 2, iterations ≥ 1 and repetitions ≥ 1".into(),
            ));
        }
        if let Some(s) = self.wall_clock_secs {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("wall_clock_secs must be positive, got {s}")));
            }
        }
        self.per_eval.to_search()?;
        Ok(())
    }
}

/// Where an evaluation started.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Start {
    Fresh,
    Store { path: usize, rank_thr: usize, state: usize },
}

/// Diagnostics of one latent-vector evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct EvalRecord {
    pub eval: usize,
    pub round: usize,
    pub particle: usize,
    pub start: Start,
    pub start_rho: usize,
    /// Best ρ of each repetition.
    pub rep_rhos: Vec<usize>,
    /// Min, median and max of `rep_rhos`.
    pub rho_quantiles: [usize; 3],
    pub fitness: f64,
    pub matrix_evals: u64,
    pub policy_digest: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct LeaderboardEntry {
    pub eval: usize,
    pub report: FitnessReport,
    pub policy_digest: String,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub best_policy: Policy,
    pub best_theta: Vec<f64>,
    pub best_report: FitnessReport,
    /// From the benchmark to the best state found, including any stored
    /// prefix the winning run restarted from.
    pub best_trajectory: Trajectory,
    pub leaderboard: Vec<LeaderboardEntry>,
    pub records: Vec<EvalRecord>,
    pub evaluations: usize,
}

struct EvalResult {
    record: EvalRecord,
    report: FitnessReport,
    path: Trajectory,
    policy: Policy,
    theta: Vec<f64>,
}

fn quartiles(rhos: &[usize]) -> [usize; 3] {
    let mut v = rhos.to_vec();
    v.sort_unstable();
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    [at(0.25), at(0.5), at(0.75)]
}

/// Start of evaluation `e` given the store as it was when its round began.
fn choose_start(
    store: &PathStore,
    fresh: &ParityMatrix,
    e: usize,
    restarts_per_fresh: usize,
    seed: u64,
) -> Result<(Start, ParityMatrix, Option<Trajectory>)> {
    let best = store.best_path();
    let Some(path) = best.filter(|_| restarts_per_fresh > 0 && !e.is_multiple_of(restarts_per_fresh + 1))
    else {
        return Ok((Start::Fresh, fresh.clone(), None));
    };
    let t = store.get(path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(seed ^ 0x5bd1_e995, e as u64 + 1));
    let rank_thr = quartiles(&t.column_counts)[rng.gen_range(0..3)];
    let state = restart_index(&t.column_counts, rank_thr);
    let start = set_up_new_init(store, path, rank_thr)?;
    Ok((
        Start::Store {
            path,
            rank_thr,
            state,
        },
        start,
        Some(t.prefix(state)),
    ))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    cfg: &TunerConfig,
    theta: &[f64],
    start: Start,
    start_p: &ParityMatrix,
    prefix: Option<Trajectory>,
    tensor: &SignatureTensor,
    budget: &SearchBudget,
    eval_seed: u64,
) -> Result<(FitnessReport, Trajectory, Vec<usize>, u64, Policy)> {
    let latent = LatentVector::new(theta.to_vec())?;
    let policy = cfg.mapping.map(&cfg.base_policy, &latent)?;
    let from_store = matches!(start, Start::Store { .. });
    let start_rho = start_p.column_count();
    let mut best: Option<(FitnessReport, Trajectory)> = None;
    let mut rhos = Vec::new();
    let mut evals = 0;
    for r in 0..cfg.repetitions {
        let t = optimize_beam(start_p, &policy, budget, restart_seed(eval_seed, r as u64))?;
        evals += t.total_evals;
        let cut = t.prefix(t.best_index());
        let report = fitness(cut.last(), from_store, start_rho, tensor);
        rhos.push(report.rho);
        if best.as_ref().is_none_or(|(b, _)| report.fitness < b.fitness) {
            best = Some((report, cut));
        }
    }
    let (report, run) = best.expect("at least one repetition");
    let path = match prefix {
        Some(mut p) => {
            p.extend_with(&run)?;
            p
        }
        None => run,
    };
    Ok((report, path, rhos, evals, policy))
}

/// Runs the swarm against `benchmark`. Each round evaluates every particle
/// in parallel, then commits improvements to the store in particle order,
/// so results depend only on the seed unless a wall clock cuts the run.
pub fn tune(
    benchmark: &ParityMatrix,
    cfg: &TunerConfig,
    store: &mut PathStore,
    seed: u64,
) -> Result<TuneOutcome> {
    cfg.validate()?;
    let tensor = benchmark.signature_tensor();
    if *store.tensor() != tensor {
        return Err(Error::TensorMismatch(0));
    }
    let fresh = benchmark.simplify();
    let start_time = Instant::now();
    let deadline = cfg.wall_clock_secs.map(|s| start_time + Duration::from_secs_f64(s));
    let base_budget = cfg.per_eval.to_search()?;
    let d = cfg.mapping.dim();
    let initial = initial_theta(cfg);
    let mut swarm = ParticleSwarm::new(d, cfg.swarm, cfg.pso, seed, initial.as_deref());

    let mut records = Vec::new();
    let mut results: Vec<EvalResult> = Vec::new();
    let mut best: Option<usize> = None;
    let mut e0 = 0usize;
    for round in 0..cfg.iterations {
        if round > 0 && deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let mut budget = base_budget;
        if let Some(d) = deadline {
            let left = d.saturating_duration_since(Instant::now()).max(Duration::from_millis(1));
            budget.wall_clock_limit = Some(budget.wall_clock_limit.map_or(left, |w| w.min(left)));
        }
        let positions: Vec<Vec<f64>> = swarm.ask().to_vec();
        let starts = (0..positions.len())
            .map(|i| choose_start(store, &fresh, e0 + i, cfg.restarts_per_fresh, seed))
            .collect::<Result<Vec<_>>>()?;
        let outs: Vec<Result<EvalResult>> = positions
            .par_iter()
            .zip(starts.into_par_iter())
            .enumerate()
            .map(|(i, (theta, (start, p, prefix)))| {
                let e = e0 + i;
                let eval_seed = restart_seed(seed, (e as u64 + 1) << 16);
                let (report, path, rhos, evals, policy) =
                    evaluate(cfg, theta, start, &p, prefix, &tensor, &budget, eval_seed)?;
                let mut q = rhos.clone();
                q.sort_unstable();
                let record = EvalRecord {
                    eval: e,
                    round,
                    particle: i,
                    start,
                    start_rho: p.column_count(),
                    rho_quantiles: [q[0], q[q.len() / 2], q[q.len() - 1]],
                    rep_rhos: rhos,
                    fitness: report.fitness,
                    matrix_evals: evals,
                    policy_digest: policy.digest(),
                };
                Ok(EvalResult {
                    record,
                    report,
                    path,
                    policy,
                    theta: theta.clone(),
                })
            })
            .collect();
        let mut values = Vec::with_capacity(outs.len());
        for out in outs {
            let r = out?;
            values.push(r.report.fitness);
            log::info!(
                "eval {} (round {}, particle {}): start ρ {} → best ρ {} [{:?}], fitness {:.4}",
                r.record.eval,
                round,
                r.record.particle,
                r.record.start_rho,
                r.report.rho,
                r.record.rho_quantiles,
                r.report.fitness
            );
            let store_best = store.best_path().map(|id| {
                let b = store.get(id).expect("listed path").best();
                (b.column_count(), b.density())
            });
            let mine = r.path.best();
            let improves = r.report.valid
                && store_best.is_none_or(|(rho, dens)| {
                    (mine.column_count(), mine.density()) < (rho, dens)
                });
            if improves {
                store.insert(r.path.clone())?;
            }
            if r.report.valid
                && best.is_none_or(|b| r.report.fitness < results[b].report.fitness)
            {
                best = Some(results.len());
            }
            records.push(r.record.clone());
            results.push(r);
        }
        swarm.tell(&values);
        e0 += positions.len();
    }

    let Some(b) = best else {
        return Err(Error::Config("no evaluation produced a valid decomposition".into()));
    };
    let mut board: Vec<&EvalResult> = results
        .iter()
        .filter(|r| r.report.valid && r.path.best().signature_tensor() == tensor)
        .collect();
    board.sort_by(|a, b| {
        a.report
            .fitness
            .total_cmp(&b.report.fitness)
            .then(a.record.eval.cmp(&b.record.eval))
    });
    let leaderboard = board
        .into_iter()
        .take(cfg.leaderboard_size)
        .map(|r| LeaderboardEntry {
            eval: r.record.eval,
            report: r.report,
            policy_digest: r.record.policy_digest.clone(),
            theta: r.theta.clone(),
        })
        .collect();
    let w = &results[b];
    Ok(TuneOutcome {
        best_policy: w.policy.clone(),
        best_theta: w.theta.clone(),
        best_report: w.report,
        best_trajectory: w.path.clone(),
        leaderboard,
        evaluations: results.len(),
        records,
    })
}

/// The latent point closest to the base policy for entries whose control
/// the base sets as a constant inside the transform's range; others start
/// at the box centre. Used to seed the first particle.
fn initial_theta(cfg: &TunerConfig) -> Option<Vec<f64>> {
    let base = LatentVector::new(vec![0.0; cfg.mapping.dim()]).ok()?;
    let at_zero = cfg.mapping.map(&cfg.base_policy, &base).ok()?;
    if at_zero == cfg.base_policy {
        return None;
    }
    // Search each coordinate on a grid for the value reproducing the base
    // policy's control; falls back to 0.
    let mut theta = vec![0.0; cfg.mapping.dim()];
    for i in 0..cfg.mapping.dim() {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=80 {
            let x = BOX_LO + (BOX_HI - BOX_LO) * k as f64 / 80.0;
            let mut t = theta.clone();
            t[i] = x;
            let Ok(p) = cfg.mapping.map(&cfg.base_policy, &LatentVector::new(t).ok()?) else {
                continue;
            };
            let dist = policy_distance(&p, &cfg.base_policy);
            if dist < best.0 {
                best = (dist, x);
            }
        }
        theta[i] = best.1;
    }
    Some(theta)
}

/// Rough distance between policies over their JSON numbers.
fn policy_distance(a: &Policy, b: &Policy) -> f64 {
    fn nums(v: &serde_json::Value, out: &mut Vec<f64>) {
        match v {
            serde_json::Value::Number(n) => out.push(n.as_f64().unwrap_or(0.0)),
            serde_json::Value::Bool(x) => out.push(f64::from(u8::from(*x))),
            serde_json::Value::Array(xs) => xs.iter().for_each(|x| nums(x, out)),
            serde_json::Value::Object(m) => m.values().for_each(|x| nums(x, out)),
            _ => {}
        }
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    nums(&serde_json::to_value(a).expect("serializes"), &mut x);
    nums(&serde_json::to_value(b).expect("serializes"), &mut y);
    if x.len() != y.len() {
        return f64::INFINITY;
    }
    x.iter()
        .zip(&y)
        .map(|(p, q)| ((p - q) / (1.0 + q.abs())).abs())
        .sum()
}

#[cfg(test)]
mod tests;

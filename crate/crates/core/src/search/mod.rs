//! The optimization loop.
//!
//! One iteration screens cheap candidates from the common subspace, expands
//! into per-`z` nullspaces when the pool is still thin, scores and truncates
//! the pool, rescores the survivors and samples the action to apply.
//! [`optimize`] repeats this until nothing improves or the budget runs out;
//! [`optimize_beam`] keeps several states alive per step.

mod trajectory;

pub use trajectory::{StopReason, Trajectory};

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{
    all_upper_bounds, apply_action, best_z_for, is_permutation, z_candidates, Action, ColumnIndex, NullspaceId,
    Origin, RowProducts, ZStructure,
};
use crate::error::{Error, Result};
use crate::gf2::BitVector;
use crate::parity::ParityMatrix;
use crate::policy::{softmax_select, FeatureVector, Policy, Stage};

/// Consecutive non-improving iterations tolerated when plateau moves are
/// allowed (`min_reduction ≤ 0`).
pub const PLATEAU_PATIENCE: usize = 5;

/// Limits on one optimization run. At least one must be set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchBudget {
    pub wall_clock_limit: Option<Duration>,
    pub max_matrix_evals: Option<u64>,
    pub max_iterations: Option<u64>,
}

impl SearchBudget {
    pub fn iterations(n: u64) -> Self {
        Self {
            max_iterations: Some(n),
            ..Self::default()
        }
    }

    pub fn wall_clock(d: Duration) -> Self {
        Self {
            wall_clock_limit: Some(d),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wall_clock_limit.is_none()
            && self.max_matrix_evals.is_none()
            && self.max_iterations.is_none()
        {
            return Err(Error::UnboundedBudget);
        }
        Ok(())
    }

    fn deadline(&self, start: Instant) -> Option<Instant> {
        self.wall_clock_limit.map(|d| start + d)
    }

    fn exhausted(&self, iterations: u64, evals: u64, deadline: Option<Instant>) -> bool {
        self.max_iterations.is_some_and(|m| iterations >= m)
            || self.max_matrix_evals.is_some_and(|m| evals >= m)
            || deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// A scored candidate action.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub action: Action,
    pub features: FeatureVector,
    pub pool_score: f64,
    pub final_score: f64,
    /// Generation order within the iteration; the last tie-breaker.
    pub index: usize,
}

#[derive(Clone, Debug, Default)]
pub struct IterationDiagnostics {
    pub rho: usize,
    pub tohpe_dim: usize,
    pub tohpe_candidates: usize,
    pub fasttodd_skipped: bool,
    pub z_explored: usize,
    pub candidates: usize,
    pub viable: usize,
    /// `(nullspace, predicted reduction)` of every pool member.
    pub pool: Vec<(NullspaceId, i64)>,
    pub matrix_evals: u64,
    pub best_predicted: Option<i64>,
}

/// The outcome of expanding one state: every drawn action applied.
#[derive(Clone, Debug)]
struct Expansion {
    /// In draw order, duplicates removed.
    children: Vec<(Action, ParityMatrix)>,
    diagnostics: IterationDiagnostics,
}

/// Orders children by realized `(ρ, density)`; the sort is stable so draw
/// order breaks the remaining ties.
fn child_key(p: &ParityMatrix) -> (usize, f64) {
    (p.column_count(), p.density())
}

fn cmp_child(a: &ParityMatrix, b: &ParityMatrix) -> std::cmp::Ordering {
    let (ra, da) = child_key(a);
    let (rb, db) = child_key(b);
    ra.cmp(&rb).then(da.total_cmp(&db))
}

/// Runs one iteration against a simplified matrix and returns the committed
/// action, or `None` when the candidate pool is empty.
pub fn run_iteration<R: Rng + ?Sized>(
    p: &ParityMatrix,
    pol: &Policy,
    rng: &mut R,
) -> Result<(Option<Action>, IterationDiagnostics)> {
    let exp = expand(p, pol, rng, None)?;
    let best = exp
        .children
        .into_iter()
        .min_by(|a, b| cmp_child(&a.1, &b.1))
        .map(|(a, _)| a);
    Ok((best, exp.diagnostics))
}

fn expand<R: Rng + ?Sized>(
    p: &ParityMatrix,
    pol: &Policy,
    rng: &mut R,
    deadline: Option<Instant>,
) -> Result<Expansion> {
    let rho = p.column_count();
    let stage = pol.at(rho);
    let mut diag = IterationDiagnostics {
        rho,
        ..Default::default()
    };
    if rho == 0 {
        return Ok(Expansion {
            children: Vec::new(),
            diagnostics: diag,
        });
    }
    let iter_seed: u64 = rng.gen();
    let mut generator = Generator::new(p, &stage);

    let mut candidates = Vec::new();
    let forwarded = generator.tohpe_stage(iter_seed, &mut candidates, &mut diag);
    let viable = |c: &[Candidate]| c.len();
    diag.fasttodd_skipped = stage.try_only_tohpe && viable(&candidates) >= stage.min_pool_size;
    if !diag.fasttodd_skipped {
        generator.fasttodd_stage(iter_seed, forwarded, &mut candidates, &mut diag, deadline);
    }
    diag.candidates = candidates.len();
    diag.viable = candidates.len();

    let pool = build_pool(candidates, &stage);
    diag.pool = pool
        .iter()
        .map(|c| (c.action.nullspace_id, c.action.predicted_reduction))
        .collect();
    diag.best_predicted = pool.iter().map(|c| c.action.predicted_reduction).max();
    if pool.is_empty() {
        diag.matrix_evals = generator.evals;
        return Ok(Expansion {
            children: Vec::new(),
            diagnostics: diag,
        });
    }

    let mut evals = generator.evals;
    let (pool, applied) = final_rescore(p, pool, &stage, &mut evals)?;
    let scores: Vec<f64> = pool.iter().map(|c| c.final_score).collect();
    let picks = softmax_select(&scores, stage.temperature, stage.todd_width.max(1), rng)?;
    let mut seen = HashSet::new();
    let mut children = Vec::new();
    for i in picks {
        if !seen.insert(i) {
            continue;
        }
        let next = match &applied[i] {
            Some(q) => q.clone(),
            None => {
                evals += 1;
                apply_action(p, &pool[i].action)?
            }
        };
        children.push((pool[i].action.clone(), next));
    }
    diag.matrix_evals = evals;
    Ok(Expansion {
        children,
        diagnostics: diag,
    })
}

/// Candidate generation state shared by both stages of one iteration.
struct Generator<'a> {
    p: &'a ParityMatrix,
    stage: &'a Stage,
    ctx: RowProducts,
    index: ColumnIndex,
    evals: u64,
    n: usize,
    m: usize,
}

impl<'a> Generator<'a> {
    fn new(p: &'a ParityMatrix, stage: &'a Stage) -> Self {
        Self {
            p,
            stage,
            ctx: RowProducts::new(p),
            index: ColumnIndex::new(p),
            evals: 0,
            n: p.qubits(),
            m: p.column_count(),
        }
    }

    fn in_range(&self, reduction: i64) -> bool {
        (self.stage.min_reduction..=self.stage.max_reduction).contains(&reduction)
    }

    /// Screens `y` from the common subspace, each paired with its best `z`.
    /// Returns the z values to forward to the expansion stage.
    fn tohpe_stage(
        &mut self,
        seed: u64,
        out: &mut Vec<Candidate>,
        diag: &mut IterationDiagnostics,
    ) -> Vec<BitVector> {
        let st = self.stage;
        if st.max_tohpe == 0 && st.tohpe_num_best == 0 {
            return Vec::new();
        }
        let basis = self.ctx.tohpe_subspace();
        diag.tohpe_dim = basis.len();
        if basis.is_empty() {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7f4a_7c15_9e37_79b9);
        let ys = sample_span(&basis, st.num_samples.max(1), &mut rng, true);
        let mut found: Vec<Candidate> = Vec::new();
        for y in ys {
            self.evals += 1;
            let Some((z, red)) = best_z_for(self.p, &y) else {
                continue;
            };
            let red = red as i64;
            if !self.in_range(red) || (red == 0 && is_permutation(&self.index, self.p, &z, &y)) {
                continue;
            }
            let ub = crate::engine::reduction_upper_bound(self.p, &z);
            let features = FeatureVector::pool(
                red,
                basis.len(),
                ub,
                y.count_ones(),
                z.count_ones(),
                self.m,
                self.n,
            );
            found.push(Candidate {
                pool_score: st.pool_score(&features),
                action: Action {
                    z,
                    y,
                    predicted_reduction: red,
                    origin: Origin::Tohpe,
                    nullspace_id: NullspaceId::Tohpe,
                    append_z: false,
                },
                features,
                final_score: 0.0,
                index: 0,
            });
        }
        sort_by_score(&mut found, |c| c.pool_score);
        let mut forwarded = Vec::new();
        let mut seen = HashSet::new();
        let mut by_reduction: Vec<&Candidate> = found.iter().collect();
        by_reduction.sort_by(|a, b| b.action.predicted_reduction.cmp(&a.action.predicted_reduction));
        for c in by_reduction {
            if forwarded.len() >= st.tohpe_num_best {
                break;
            }
            if seen.insert(c.action.z.clone()) {
                forwarded.push(c.action.z.clone());
            }
        }
        found.truncate(st.max_tohpe);
        diag.tohpe_candidates = found.len();
        for mut c in found {
            c.index = out.len();
            out.push(c);
        }
        forwarded
    }

    /// Explores per-`z` nullspaces in batches until enough z values have
    /// been tried and the pool is large enough.
    fn fasttodd_stage(
        &mut self,
        seed: u64,
        forwarded: Vec<BitVector>,
        out: &mut Vec<Candidate>,
        diag: &mut IterationDiagnostics,
        deadline: Option<Instant>,
    ) {
        let st = self.stage;
        let bounds = all_upper_bounds(self.p);
        let floor = st.min_reduction.max(1) as usize;
        let plateau = st.min_reduction <= 0;
        let mut seen: HashSet<BitVector> = HashSet::new();
        let mut order: Vec<(BitVector, usize)> = Vec::new();
        for z in forwarded {
            let ub = bounds.get(&z).copied().unwrap_or(0);
            if seen.insert(z.clone()) {
                order.push((z, ub));
            }
        }
        let mut rest: Vec<(BitVector, usize)> = z_candidates(self.p)
            .into_iter()
            .filter(|z| !seen.contains(z))
            .map(|z| {
                let ub = bounds.get(&z).copied().unwrap_or(0);
                (z, ub)
            })
            .collect();
        // Stable: equal bounds keep candidate order.
        rest.sort_by(|a, b| b.1.cmp(&a.1));
        order.extend(rest);
        if !plateau {
            order.retain(|(_, ub)| *ub >= floor);
        }

        let batch = st.min_z_to_research.max(1);
        let mut explored = 0;
        for chunk in order.chunks(batch) {
            let results: Vec<(Vec<Candidate>, u64)> = chunk
                .par_iter()
                .enumerate()
                .map(|(k, (z, ub))| {
                    let pos = explored + k;
                    let z_seed = seed
                        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(pos as u64 + 1));
                    self.explore_z(z, *ub, pos, z_seed)
                })
                .collect();
            explored += chunk.len();
            for (cands, evals) in results {
                self.evals += evals;
                for mut c in cands {
                    c.index = out.len();
                    out.push(c);
                }
            }
            if explored >= st.min_z_to_research && out.len() >= st.min_pool_size {
                break;
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
        }
        diag.z_explored = explored;
    }

    /// Samples `y` from `N_z` and keeps the best few in range.
    fn explore_z(&self, z: &BitVector, ub: usize, pos: usize, seed: u64) -> (Vec<Candidate>, u64) {
        let st = self.stage;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = self.ctx.nullspace_for_z(z, st.append_z_column);
        let dim = basis.len();
        let take = ((st.gen_part * dim as f64).ceil() as usize).min(dim);
        let gens = &basis[..take];
        if gens.is_empty() {
            return (Vec::new(), 0);
        }
        let zs = ZStructure::new(&self.index, self.p, z);
        let plateau = st.min_reduction <= 0;
        let mut evals = 0u64;
        let mut found: Vec<Candidate> = Vec::new();
        let push = |y: BitVector, red: i64, found: &mut Vec<Candidate>| {
            if !self.in_range(red) || (red == 0 && is_permutation(&self.index, self.p, z, &y)) {
                return;
            }
            let features =
                FeatureVector::pool(red, dim, ub, y.count_ones(), z.count_ones(), self.m, self.n);
            found.push(Candidate {
                pool_score: st.pool_score(&features),
                action: Action {
                    z: z.clone(),
                    y,
                    predicted_reduction: red,
                    origin: Origin::FastTodd,
                    nullspace_id: NullspaceId::Z(pos),
                    append_z: st.append_z_column,
                },
                features,
                final_score: 0.0,
                index: 0,
            });
        };

        // With the appended column the count also depends on the parity of
        // |y|, so that parity rides along as one extra projected coordinate.
        let append = st.append_z_column;
        let z_col = self.index.get(z);
        let project = |g: &BitVector| {
            let mut v = zs.project(g);
            if append {
                v.push(g.count_ones() % 2 == 1);
            }
            v
        };
        let split = ActiveSplit::new(gens, zs.targets() + usize::from(append), project);
        for (y, proj) in split.samples(st.num_samples.max(1), plateau, &mut rng) {
            evals += 1;
            let mut red = zs.reduction_of_projection(&proj) as i64;
            if append && y.count_ones() % 2 == 1 {
                // The appended z cancels an unshifted z column, else adds one.
                red += if z_col.is_some_and(|j| !y.get(j)) { 1 } else { -1 };
            }
            push(y, red, &mut found);
        }
        sort_by_score(&mut found, |c| c.pool_score);
        dedup_actions(&mut found);
        found.truncate(st.max_from_single_ns);
        (found, evals)
    }
}

/// Generators of `N_z` split by whether they touch the columns `z` can
/// cancel. Active generators are reduced so their projections onto the
/// cancellation targets are independent; passive ones only move columns
/// around without changing the count.
struct ActiveSplit {
    active: Vec<(BitVector, BitVector)>,
    passive: Vec<BitVector>,
    targets: usize,
}

impl ActiveSplit {
    fn new(gens: &[BitVector], targets: usize, project: impl Fn(&BitVector) -> BitVector) -> Self {
        let mut active: Vec<(BitVector, BitVector)> = Vec::new();
        let mut passive = Vec::new();
        for g in gens {
            let mut y = g.clone();
            let mut proj = project(g);
            // Reduce against the active set so far; pivots are first ones.
            loop {
                let Some(p) = proj.first_one() else { break };
                match active.iter().find(|(_, q)| q.first_one() == Some(p)) {
                    Some((ay, aq)) => {
                        y.xor_assign_unchecked(ay);
                        proj.xor_assign_unchecked(aq);
                    }
                    None => break,
                }
            }
            if proj.is_zero() {
                passive.push(y);
            } else {
                active.push((y, proj));
            }
        }
        // Back-substitute so each active projection owns its pivot alone.
        for i in (0..active.len()).rev() {
            let p = active[i].1.first_one().expect("active projection is nonzero");
            for j in 0..active.len() {
                if j != i && active[j].1.get(p) {
                    let (ay, aq) = active[i].clone();
                    active[j].0.xor_assign_unchecked(&ay);
                    active[j].1.xor_assign_unchecked(&aq);
                }
            }
        }
        Self {
            active,
            passive,
            targets,
        }
    }

    /// Up to `budget` samples `(y, projection)`. Small active spaces are
    /// enumerated exhaustively in Gray-code order; larger ones get the
    /// all-pivots combination first, then uniform random combinations.
    fn samples(
        &self,
        budget: usize,
        plateau: bool,
        rng: &mut impl Rng,
    ) -> Vec<(BitVector, BitVector)> {
        let r = self.active.len();
        let m = self
            .active
            .first()
            .map(|a| a.0.len())
            .or_else(|| self.passive.first().map(|v| v.len()))
            .unwrap_or(0);
        let mut out = Vec::new();
        let passive_mix = |rng: &mut dyn rand::RngCore, y: &mut BitVector| {
            if plateau {
                for g in &self.passive {
                    if rng.gen::<bool>() {
                        y.xor_assign_unchecked(g);
                    }
                }
            }
        };
        if r < 63 && (1u64 << r) - 1 <= budget as u64 {
            let mut y = BitVector::zeros(m);
            let mut proj = BitVector::zeros(self.targets);
            for k in 1u64..(1u64 << r) {
                let bit = k.trailing_zeros() as usize;
                y.xor_assign_unchecked(&self.active[bit].0);
                proj.xor_assign_unchecked(&self.active[bit].1);
                let mut yy = y.clone();
                passive_mix(rng, &mut yy);
                out.push((yy, proj.clone()));
            }
            if plateau {
                let extra = budget.saturating_sub(out.len()).min(1usize << self.passive.len().min(20));
                let mut seen = HashSet::new();
                for _ in 0..extra {
                    let mut yy = BitVector::zeros(m);
                    passive_mix(rng, &mut yy);
                    if !yy.is_zero() && seen.insert(yy.clone()) {
                        out.push((yy, BitVector::zeros(self.targets)));
                    }
                }
            }
            return out;
        }
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let all = BitVector::ones(r);
        let mut combos = vec![all];
        let attempts = budget * 4;
        for _ in 0..attempts {
            if combos.len() >= budget {
                break;
            }
            let words: Vec<u64> = (0..r.div_ceil(64)).map(|_| rng.gen()).collect();
            let c = BitVector::from_words(r, words);
            if !c.is_zero() {
                combos.push(c);
            }
        }
        for c in combos {
            if !seen.insert(c.words().to_vec()) {
                continue;
            }
            let mut y = BitVector::zeros(m);
            let mut proj = BitVector::zeros(self.targets);
            for i in c.iter_ones() {
                y.xor_assign_unchecked(&self.active[i].0);
                proj.xor_assign_unchecked(&self.active[i].1);
            }
            passive_mix(rng, &mut y);
            out.push((y, proj));
        }
        out
    }
}

/// Nonzero vectors from the span of `basis`: every combination when there
/// are at most `budget` of them, otherwise (optionally) the basis vectors
/// followed by distinct random combinations.
fn sample_span(
    basis: &[BitVector],
    budget: usize,
    rng: &mut impl Rng,
    basis_first: bool,
) -> Vec<BitVector> {
    let d = basis.len();
    let m = basis.first().map_or(0, |b| b.len());
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    if d < 63 && (1u64 << d) - 1 <= budget as u64 {
        let mut y = BitVector::zeros(m);
        for k in 1u64..(1u64 << d) {
            y.xor_assign_unchecked(&basis[k.trailing_zeros() as usize]);
            out.push(y.clone());
        }
        return out;
    }
    let mut seen = HashSet::new();
    if basis_first {
        for b in basis.iter().take(budget) {
            seen.insert(b.clone());
            out.push(b.clone());
        }
    }
    let mut attempts = 0;
    while out.len() < budget && attempts < budget * 4 {
        attempts += 1;
        let mut y = BitVector::zeros(m);
        for b in basis {
            if rng.gen::<bool>() {
                y.xor_assign_unchecked(b);
            }
        }
        if !y.is_zero() && seen.insert(y.clone()) {
            out.push(y);
        }
    }
    out
}

/// Sorts by score descending, then larger predicted reduction, then
/// generation order.
fn sort_by_score(c: &mut [Candidate], score: impl Fn(&Candidate) -> f64) {
    c.sort_by(|a, b| {
        score(b)
            .total_cmp(&score(a))
            .then(b.action.predicted_reduction.cmp(&a.action.predicted_reduction))
            .then(a.index.cmp(&b.index))
    });
}

fn dedup_actions(c: &mut Vec<Candidate>) {
    let mut seen = HashSet::new();
    c.retain(|x| seen.insert((x.action.z.clone(), x.action.y.clone())));
}

/// Truncates to `max_pool_size` with at most `max_from_single_ns` per
/// nullspace.
fn build_pool(mut candidates: Vec<Candidate>, st: &Stage) -> Vec<Candidate> {
    sort_by_score(&mut candidates, |c| c.pool_score);
    let mut per_ns: std::collections::HashMap<NullspaceId, usize> = Default::default();
    let mut pool = Vec::new();
    for c in candidates {
        if pool.len() >= st.max_pool_size {
            break;
        }
        let k = per_ns.entry(c.action.nullspace_id).or_default();
        if *k >= st.max_from_single_ns {
            continue;
        }
        *k += 1;
        pool.push(c);
    }
    pool
}

/// Computes the final scores; the lookahead feature is only paid for when
/// its weight is nonzero. Returns the pool sorted by final score and the
/// applied results computed along the way.
fn final_rescore(
    p: &ParityMatrix,
    mut pool: Vec<Candidate>,
    st: &Stage,
    evals: &mut u64,
) -> Result<(Vec<Candidate>, Vec<Option<ParityMatrix>>)> {
    let lookahead = st.final_weights[5] != 0.0;
    let m = p.column_count();
    let mut applied: Vec<Option<ParityMatrix>> = vec![None; pool.len()];
    if lookahead {
        let results: Vec<Result<(ParityMatrix, usize)>> = pool
            .par_iter()
            .map(|c| {
                let next = apply_action(p, &c.action)?;
                let dim = RowProducts::new(&next).tohpe_subspace().len();
                Ok((next, dim))
            })
            .collect();
        for (i, r) in results.into_iter().enumerate() {
            let (next, dim) = r?;
            *evals += 1;
            pool[i].features = pool[i].features.with_lookahead(dim, m);
            applied[i] = Some(next);
        }
    }
    for c in &mut pool {
        c.final_score = st.final_score(&c.features);
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[b]
            .final_score
            .total_cmp(&pool[a].final_score)
            .then(pool[b].action.predicted_reduction.cmp(&pool[a].action.predicted_reduction))
            .then(pool[a].index.cmp(&pool[b].index))
    });
    let sorted_pool = order.iter().map(|&i| pool[i].clone()).collect();
    let sorted_applied = order.iter().map(|&i| applied[i].take()).collect();
    Ok((sorted_pool, sorted_applied))
}

fn patience_for(pol: &Policy, rho: usize) -> usize {
    if let Some(k) = pol.patience {
        return k.max(1) as usize;
    }
    if pol.min_reduction.eval(rho) >= 1 {
        1
    } else {
        PLATEAU_PATIENCE
    }
}

/// Greedy-by-sampling descent from `p` until no action is found, the
/// patience rule fires, or the budget runs out.
pub fn optimize(
    p: &ParityMatrix,
    pol: &Policy,
    budget: &SearchBudget,
    seed: u64,
) -> Result<Trajectory> {
    budget.validate()?;
    pol.validate()?;
    let start = Instant::now();
    let deadline = budget.deadline(start);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory::start(p.simplify(), seed, pol.digest());
    let mut evals = 0u64;
    let mut iterations = 0u64;
    let mut stall = 0usize;
    loop {
        if budget.exhausted(iterations, evals, deadline) {
            traj.stop_reason = StopReason::BudgetExhausted;
            break;
        }
        let current = traj.last().clone();
        let exp = expand(&current, pol, &mut rng, deadline)?;
        iterations += 1;
        evals += exp.diagnostics.matrix_evals;
        let Some((action, next)) = exp
            .children
            .into_iter()
            .min_by(|a, b| cmp_child(&a.1, &b.1))
        else {
            traj.stop_reason = StopReason::NoAction;
            break;
        };
        let improved = next.column_count() < current.column_count();
        traj.push(action, next, evals);
        if improved {
            stall = 0;
        } else {
            stall += 1;
            if stall >= patience_for(pol, current.column_count()) {
                traj.stop_reason = StopReason::Patience;
                break;
            }
        }
    }
    traj.iterations = iterations;
    traj.total_evals = evals;
    log::debug!(
        "optimize seed={seed}: ρ {} -> {} in {iterations} iterations, {evals} evals",
        traj.column_counts[0],
        traj.final_rho()
    );
    Ok(traj)
}

/// Seed of restart `k`; restart 0 keeps the caller's seed.
pub fn restart_seed(seed: u64, k: u64) -> u64 {
    if k == 0 {
        return seed;
    }
    // splitmix64 finalizer over the pair.
    let mut x = seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Result of [`optimize_restarts`].
#[derive(Clone, Debug)]
pub struct RestartOutcome {
    pub best: Trajectory,
    /// Index of the restart that produced `best`.
    pub best_restart: u64,
    pub runs: u64,
    /// Final ρ of every run in restart order.
    pub final_rhos: Vec<usize>,
}

/// Independent descents from the same input with derived seeds, run in
/// parallel batches; keeps the lowest `(ρ, density, restart)`. Iteration
/// and evaluation limits apply to each run, the wall clock to the whole.
/// With `restarts = None` runs continue until the wall clock expires or
/// `target_rho` is reached.
pub fn optimize_restarts(
    p: &ParityMatrix,
    pol: &Policy,
    budget: &SearchBudget,
    seed: u64,
    restarts: Option<u64>,
    target_rho: Option<usize>,
) -> Result<RestartOutcome> {
    budget.validate()?;
    if restarts.is_none() && budget.wall_clock_limit.is_none() {
        return Err(Error::UnboundedBudget);
    }
    let start = Instant::now();
    let deadline = budget.deadline(start);
    let batch = rayon::current_num_threads().max(1) as u64;
    let mut best: Option<(Trajectory, u64)> = None;
    let mut final_rhos = Vec::new();
    let mut k = 0u64;
    loop {
        let remaining = restarts.map_or(batch, |r| r.saturating_sub(k).min(batch));
        if remaining == 0 {
            break;
        }
        let mut per_run = *budget;
        if let Some(d) = deadline {
            let now = Instant::now();
            if now >= d && k > 0 {
                break;
            }
            per_run.wall_clock_limit = Some(d.saturating_duration_since(now));
        }
        let runs: Vec<Result<Trajectory>> = (k..k + remaining)
            .into_par_iter()
            .map(|i| optimize(p, pol, &per_run, restart_seed(seed, i)))
            .collect();
        for (i, r) in (k..).zip(runs) {
            let t = r?;
            final_rhos.push(t.final_rho());
            let better = match &best {
                None => true,
                Some((b, _)) => cmp_child(t.best(), b.best()).is_lt(),
            };
            if better {
                best = Some((t, i));
            }
        }
        k += remaining;
        if let (Some(target), Some((b, _))) = (target_rho, &best) {
            if b.best_rho() <= target {
                break;
            }
        }
    }
    let (best, best_restart) = best.expect("at least one run");
    Ok(RestartOutcome {
        best,
        best_restart,
        runs: k,
        final_rhos,
    })
}

#[derive(Clone)]
struct BeamNode {
    traj: Trajectory,
}

/// Beam variant: keeps the best `beamsearch_width` states by `(ρ, density)`
/// after expanding every state with `todd_width` drawn actions. Width 1 is
/// the plain loop.
pub fn optimize_beam(
    p: &ParityMatrix,
    pol: &Policy,
    budget: &SearchBudget,
    seed: u64,
) -> Result<Trajectory> {
    budget.validate()?;
    pol.validate()?;
    let start = Instant::now();
    let deadline = budget.deadline(start);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = Trajectory::start(p.simplify(), seed, pol.digest());
    let mut beam = vec![BeamNode { traj: root }];
    let mut evals = 0u64;
    let mut iterations = 0u64;
    let mut stall = 0usize;
    let stop_reason;
    loop {
        if budget.exhausted(iterations, evals, deadline) {
            stop_reason = StopReason::BudgetExhausted;
            break;
        }
        let best_rho = beam[0].traj.final_rho();
        let width = pol.beamsearch_width.eval(best_rho).max(1) as usize;
        let mut children: Vec<(usize, Action, ParityMatrix)> = Vec::new();
        for (k, node) in beam.iter().enumerate() {
            let exp = expand(node.traj.last(), pol, &mut rng, deadline)?;
            evals += exp.diagnostics.matrix_evals;
            for (a, q) in exp.children {
                children.push((k, a, q));
            }
        }
        iterations += 1;
        if children.is_empty() {
            stop_reason = StopReason::NoAction;
            break;
        }
        children.sort_by(|a, b| cmp_child(&a.2, &b.2));
        let mut seen = HashSet::new();
        let mut next_beam = Vec::with_capacity(width);
        for (k, a, q) in children {
            if next_beam.len() >= width {
                break;
            }
            if !seen.insert(q.clone()) {
                continue;
            }
            let mut traj = beam[k].traj.clone();
            traj.push(a, q, evals);
            next_beam.push(BeamNode { traj });
        }
        let new_best = next_beam[0].traj.final_rho();
        beam = next_beam;
        if new_best < best_rho {
            stall = 0;
        } else {
            stall += 1;
            if stall >= patience_for(pol, best_rho) {
                stop_reason = StopReason::Patience;
                break;
            }
        }
    }
    let mut traj = beam.swap_remove(0).traj;
    traj.stop_reason = stop_reason;
    traj.iterations = iterations;
    traj.total_evals = evals;
    Ok(traj)
}

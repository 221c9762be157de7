//! Tunable search and choice controls.
//!
//! Every control is a [`Schedule`]: a piecewise-constant function of the
//! current column count `ρ`. A [`Policy`] bundles all of them; [`Stage`] is
//! the policy resolved at one `ρ`.

use std::path::Path;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Below this temperature selection is an exact argmax.
pub const TAU_FLOOR: f64 = 1e-6;

/// A value that depends on the column count `ρ`.
///
/// With thresholds `r_1 > … > r_k` and values `v_1 … v_{k+1}`, the value is
/// `v_1` for `ρ ≥ r_1`, `v_i` for `r_i ≤ ρ < r_{i-1}`, and `v_{k+1}` for
/// `ρ < r_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    thresholds: Vec<u32>,
    values: Vec<T>,
}

impl<T: Clone> Schedule<T> {
    pub fn constant(v: T) -> Self {
        Self {
            thresholds: Vec::new(),
            values: vec![v],
        }
    }

    pub fn staged(thresholds: Vec<u32>, values: Vec<T>) -> Result<Self> {
        if values.len() != thresholds.len() + 1 {
            return Err(Error::InvalidPolicy(format!(
                "schedule with {} thresholds needs {} values, got {}",
                thresholds.len(),
                thresholds.len() + 1,
                values.len()
            )));
        }
        if thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidPolicy(format!(
                "schedule thresholds must be strictly decreasing: {thresholds:?}"
            )));
        }
        Ok(Self { thresholds, values })
    }

    pub fn eval(&self, rho: usize) -> T {
        for (i, &r) in self.thresholds.iter().enumerate() {
            if rho >= r as usize {
                return self.values[i].clone();
            }
        }
        self.values[self.thresholds.len()].clone()
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        self.thresholds.is_empty()
    }
}

impl<T: Clone + Default> Default for Schedule<T> {
    fn default() -> Self {
        Self::constant(T::default())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StagedRepr<T> {
    thresholds: Vec<u32>,
    values: Vec<T>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScheduleRepr<T> {
    Scalar(T),
    Staged(StagedRepr<T>),
}

impl<T: Clone + Serialize> Serialize for Schedule<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_constant() {
            self.values[0].serialize(s)
        } else {
            StagedRepr {
                thresholds: self.thresholds.clone(),
                values: self.values.clone(),
            }
            .serialize(s)
        }
    }
}

impl<'de, T: Clone + DeserializeOwned> Deserialize<'de> for Schedule<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ScheduleRepr::<T>::deserialize(d)? {
            ScheduleRepr::Scalar(v) => Ok(Schedule::constant(v)),
            ScheduleRepr::Staged(r) => {
                Schedule::staged(r.thresholds, r.values).map_err(serde::de::Error::custom)
            }
        }
    }
}

/// Every tunable control of the optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Policy {
    pub min_z_to_research: Schedule<u32>,
    pub gen_part: Schedule<f64>,
    pub num_samples: Schedule<u32>,
    pub max_tohpe: Schedule<u32>,
    pub tohpe_num_best: Schedule<u32>,
    pub try_only_tohpe: Schedule<bool>,
    pub min_pool_size: Schedule<u32>,
    pub max_pool_size: Schedule<u32>,
    pub max_from_single_ns: Schedule<u32>,
    pub min_reduction: Schedule<i64>,
    pub max_reduction: Schedule<i64>,
    pub beamsearch_width: Schedule<u32>,
    pub todd_width: Schedule<u32>,
    pub pool_weights: [Schedule<f64>; 5],
    pub pool_centers: [Schedule<f64>; 5],
    pub pool_exponent: Schedule<f64>,
    pub final_weights: [Schedule<f64>; 6],
    pub final_centers: [Schedule<f64>; 6],
    pub final_exponent: Schedule<f64>,
    pub temperature: Schedule<f64>,
    /// Allow odd-weight `y` by appending `z` as an extra column.
    pub append_z_column: bool,
    /// Consecutive non-improving iterations before stopping. Unset means 1
    /// when `min_reduction ≥ 1` at the current column count, else 5.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<u32>,
}

fn c<T: Clone>(v: T) -> Schedule<T> {
    Schedule::constant(v)
}

impl Default for Policy {
    /// The fixed hand-designed policy: prefer large immediate reductions,
    /// with a mild pull towards low-weight `y`, and sample near-greedily.
    fn default() -> Self {
        Self {
            min_z_to_research: c(24),
            gen_part: c(1.0),
            num_samples: c(256),
            max_tohpe: c(16),
            tohpe_num_best: c(4),
            try_only_tohpe: c(false),
            min_pool_size: c(8),
            max_pool_size: c(32),
            max_from_single_ns: c(4),
            min_reduction: c(1),
            max_reduction: c(i64::from(u32::MAX)),
            beamsearch_width: c(1),
            todd_width: c(1),
            pool_weights: [c(1.0), c(0.0), c(0.2), c(-0.1), c(0.0)],
            pool_centers: [c(0.0), c(0.0), c(0.0), c(0.0), c(0.0)],
            pool_exponent: c(1.0),
            final_weights: [c(1.0), c(0.05), c(0.0), c(-0.1), c(0.0), c(0.1)],
            final_centers: [c(0.0), c(0.0), c(0.0), c(0.0), c(0.0), c(0.0)],
            final_exponent: c(1.0),
            temperature: c(0.1),
            append_z_column: false,
            patience: None,
        }
    }
}

/// A policy resolved at one column count.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub min_z_to_research: usize,
    pub gen_part: f64,
    pub num_samples: usize,
    pub max_tohpe: usize,
    pub tohpe_num_best: usize,
    pub try_only_tohpe: bool,
    pub min_pool_size: usize,
    pub max_pool_size: usize,
    pub max_from_single_ns: usize,
    pub min_reduction: i64,
    pub max_reduction: i64,
    pub beamsearch_width: usize,
    pub todd_width: usize,
    pub pool_weights: [f64; 5],
    pub pool_centers: [f64; 5],
    pub pool_exponent: f64,
    pub final_weights: [f64; 6],
    pub final_centers: [f64; 6],
    pub final_exponent: f64,
    pub temperature: f64,
    pub append_z_column: bool,
}

impl Policy {
    pub fn at(&self, rho: usize) -> Stage {
        Stage {
            min_z_to_research: self.min_z_to_research.eval(rho) as usize,
            gen_part: self.gen_part.eval(rho),
            num_samples: self.num_samples.eval(rho) as usize,
            max_tohpe: self.max_tohpe.eval(rho) as usize,
            tohpe_num_best: self.tohpe_num_best.eval(rho) as usize,
            try_only_tohpe: self.try_only_tohpe.eval(rho),
            min_pool_size: self.min_pool_size.eval(rho) as usize,
            max_pool_size: self.max_pool_size.eval(rho) as usize,
            max_from_single_ns: self.max_from_single_ns.eval(rho) as usize,
            min_reduction: self.min_reduction.eval(rho),
            max_reduction: self.max_reduction.eval(rho),
            beamsearch_width: self.beamsearch_width.eval(rho) as usize,
            todd_width: self.todd_width.eval(rho) as usize,
            pool_weights: std::array::from_fn(|i| self.pool_weights[i].eval(rho)),
            pool_centers: std::array::from_fn(|i| self.pool_centers[i].eval(rho)),
            pool_exponent: self.pool_exponent.eval(rho),
            final_weights: std::array::from_fn(|i| self.final_weights[i].eval(rho)),
            final_centers: std::array::from_fn(|i| self.final_centers[i].eval(rho)),
            final_exponent: self.final_exponent.eval(rho),
            temperature: self.temperature.eval(rho),
            append_z_column: self.append_z_column,
        }
    }

    /// All thresholds used by any control, plus the boundary points around
    /// them. Evaluating at these covers every distinct stage.
    fn stage_points(&self) -> Vec<usize> {
        let mut pts = vec![0usize];
        let mut add = |s: &[u32]| {
            for &r in s {
                pts.push(r as usize);
                pts.push((r as usize).saturating_sub(1));
            }
        };
        add(self.min_z_to_research.thresholds());
        add(self.gen_part.thresholds());
        add(self.num_samples.thresholds());
        add(self.max_tohpe.thresholds());
        add(self.tohpe_num_best.thresholds());
        add(self.try_only_tohpe.thresholds());
        add(self.min_pool_size.thresholds());
        add(self.max_pool_size.thresholds());
        add(self.max_from_single_ns.thresholds());
        add(self.min_reduction.thresholds());
        add(self.max_reduction.thresholds());
        add(self.beamsearch_width.thresholds());
        add(self.todd_width.thresholds());
        for s in self.pool_weights.iter().chain(&self.pool_centers) {
            add(s.thresholds());
        }
        for s in self.final_weights.iter().chain(&self.final_centers) {
            add(s.thresholds());
        }
        add(self.pool_exponent.thresholds());
        add(self.final_exponent.thresholds());
        add(self.temperature.thresholds());
        pts.sort_unstable();
        pts.dedup();
        pts
    }

    pub fn validate(&self) -> Result<()> {
        for rho in self.stage_points() {
            self.at(rho).validate().map_err(|e| match e {
                Error::InvalidPolicy(msg) => Error::InvalidPolicy(format!("at ρ = {rho}: {msg}")),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Short stable hash of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("policy serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Policy = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    pub fn pool_score(&self, x: &FeatureVector, rho: usize) -> f64 {
        self.at(rho).pool_score(x)
    }

    pub fn final_score(&self, x: &FeatureVector, rho: usize) -> f64 {
        self.at(rho).final_score(x)
    }
}

impl Stage {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPolicy(m));
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.pool_exponent > 0.0) || !(self.final_exponent > 0.0) {
            return bad("score exponents must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gen_part) {
            return bad(format!("gen_part must lie in [0, 1], got {}", self.gen_part));
        }
        if self
            .pool_centers
            .iter()
            .chain(&self.final_centers)
            .any(|c| !(0.0..=1.0).contains(c))
        {
            return bad("score centers must lie in [0, 1]".into());
        }
        if self
            .pool_weights
            .iter()
            .chain(&self.final_weights)
            .any(|w| !w.is_finite())
        {
            return bad("score weights must be finite".into());
        }
        if self.min_reduction > self.max_reduction {
            return bad(format!(
                "min_reduction {} exceeds max_reduction {}",
                self.min_reduction, self.max_reduction
            ));
        }
        if self.todd_width == 0 || self.beamsearch_width == 0 {
            return bad("todd_width and beamsearch_width must be at least 1".into());
        }
        Ok(())
    }

    pub fn pool_score(&self, x: &FeatureVector) -> f64 {
        weighted_deviation(
            &x.values[..5],
            &self.pool_weights,
            &self.pool_centers,
            self.pool_exponent,
        )
    }

    pub fn final_score(&self, x: &FeatureVector) -> f64 {
        weighted_deviation(
            &x.values,
            &self.final_weights,
            &self.final_centers,
            self.final_exponent,
        )
    }
}

fn weighted_deviation(x: &[f64], w: &[f64], c: &[f64], p: f64) -> f64 {
    x.iter()
        .zip(w)
        .zip(c)
        .filter(|((_, &w), _)| w != 0.0)
        .map(|((&x, &w), &c)| w * (x - c).abs().powf(p))
        .sum()
}

/// Normalized candidate features.
///
/// 1. immediate reduction / m
/// 2. dim N_z / m
/// 3. reduction upper bound for z / m
/// 4. |y| / m
/// 5. |z| / n
/// 6. dim of the common subspace after the action / m (final pool only)
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; 6],
}

fn ratio(num: f64, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        (num / den as f64).clamp(0.0, 1.0)
    }
}

impl FeatureVector {
    pub fn pool(
        reduction: i64,
        nullspace_dim: usize,
        upper_bound: usize,
        y_weight: usize,
        z_weight: usize,
        m: usize,
        n: usize,
    ) -> Self {
        Self {
            values: [
                ratio(reduction as f64, m),
                ratio(nullspace_dim as f64, m),
                ratio(upper_bound as f64, m),
                ratio(y_weight as f64, m),
                ratio(z_weight as f64, n),
                0.0,
            ],
        }
    }

    pub fn with_lookahead(mut self, next_dim: usize, m: usize) -> Self {
        self.values[5] = ratio(next_dim as f64, m);
        self
    }
}

pub fn schedule_eval<T: Clone>(s: &Schedule<T>, rho: usize) -> T {
    s.eval(rho)
}

pub fn pool_score(x: &FeatureVector, pol: &Policy, rho: usize) -> f64 {
    pol.pool_score(x, rho)
}

pub fn final_score(x: &FeatureVector, pol: &Policy, rho: usize) -> f64 {
    pol.final_score(x, rho)
}

/// `Pr(i) = exp(s_i/τ) / Σ exp(s_j/τ)`, shifted by the maximum score.
pub fn softmax_probabilities(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Draws `k` indices i.i.d. from the temperature softmax over `scores`.
/// At `τ ≤ TAU_FLOOR` every draw is the first maximal index.
pub fn softmax_select<R: Rng + ?Sized>(
    scores: &[f64],
    tau: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if tau <= TAU_FLOOR {
        return Ok(vec![argmax(scores); k]);
    }
    let probs = softmax_probabilities(scores, tau)?;
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        out.push(pick);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreedyKind {
    /// Largest immediate reduction.
    Max,
    /// Smallest positive immediate reduction.
    Min,
}

/// Near-deterministic presets that score on immediate reduction only.
pub fn greedy_preset(kind: GreedyKind) -> Policy {
    let mut p = Policy {
        pool_weights: std::array::from_fn(|_| c(0.0)),
        pool_centers: std::array::from_fn(|_| c(0.0)),
        pool_exponent: c(1.0),
        final_weights: std::array::from_fn(|_| c(0.0)),
        final_centers: std::array::from_fn(|_| c(0.0)),
        final_exponent: c(1.0),
        temperature: c(TAU_FLOOR),
        min_reduction: c(1),
        ..Policy::default()
    };
    let (w, center) = match kind {
        GreedyKind::Max => (1.0, 0.0),
        GreedyKind::Min => (-1.0, 1e-9),
    };
    p.pool_weights[0] = c(w);
    p.pool_centers[0] = c(center);
    p.final_weights[0] = c(w);
    p.final_centers[0] = c(center);
    p
}

//! Latent vectors in `[-2, 2]^d` to policies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Policy, Schedule, TAU_FLOOR};

pub const BOX_LO: f64 = -2.0;
pub const BOX_HI: f64 = 2.0;

/// A point of the tuner's search box.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(x) = coords.iter().find(|x| !(BOX_LO..=BOX_HI).contains(*x)) {
            return Err(Error::InvalidMapping(format!(
                "coordinate {x} lies outside [{BOX_LO}, {BOX_HI}]"
            )));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Position of `θ` in the box as a fraction in `[0, 1]`.
fn unit(theta: f64) -> f64 {
    ((theta - BOX_LO) / (BOX_HI - BOX_LO)).clamp(0.0, 1.0)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// How one coordinate becomes a control value. Every transform sends the
/// box onto `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    Affine { lo: f64, hi: f64 },
    /// Affine in `log`, so `θ = 0` gives the geometric midpoint.
    ExpScale { lo: f64, hi: f64 },
    /// Sigmoid of `θ` rescaled so the box ends map to `lo` and `hi`.
    Logistic { lo: f64, hi: f64 },
    RoundToInt { lo: f64, hi: f64 },
    /// 1 when `θ > threshold`, else 0.
    Gate { threshold: f64 },
}

impl Transform {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidMapping(m.to_string()));
        match *self {
            Transform::Affine { lo, hi }
            | Transform::Logistic { lo, hi }
            | Transform::RoundToInt { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) {
                    return bad("transform bounds must be finite");
                }
            }
            Transform::ExpScale { lo, hi } => {
                if !(lo > 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
                    return bad("exp_scale bounds must be positive and finite");
                }
            }
            Transform::Gate { threshold } => {
                if !threshold.is_finite() {
                    return bad("gate threshold must be finite");
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, theta: f64) -> f64 {
        let u = unit(theta);
        match *self {
            Transform::Affine { lo, hi } => lo + u * (hi - lo),
            Transform::ExpScale { lo, hi } => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
            Transform::Logistic { lo, hi } => {
                let (a, b) = (sigmoid(BOX_LO), sigmoid(BOX_HI));
                let s = (sigmoid(theta.clamp(BOX_LO, BOX_HI)) - a) / (b - a);
                lo + s * (hi - lo)
            }
            Transform::RoundToInt { lo, hi } => (lo + u * (hi - lo)).round(),
            Transform::Gate { threshold } => f64::from(u8::from(theta > threshold)),
        }
    }
}

/// One latent coordinate: which control it drives, how, and from which
/// column count on (`None` = below every listed threshold).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingEntry {
    pub control: String,
    pub transform: Transform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_thr: Option<u32>,
}

/// Ordered entries, one per latent coordinate. Entries naming the same
/// control form one schedule; their thresholds must be strictly decreasing
/// in listed order with the unthresholded entry, if any, last.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MappingSpec {
    pub entries: Vec<MappingEntry>,
}

#[derive(Clone, Copy)]
enum Kind {
    Count { lo: u32, hi: u32 },
    Signed { lo: i64, hi: i64 },
    Real { lo: f64, hi: f64 },
    Flag,
    /// Not scheduled: exactly one unthresholded entry.
    ConstFlag,
    ConstCount { lo: u32, hi: u32 },
}

const WEIGHT: Kind = Kind::Real { lo: -1e6, hi: 1e6 };
const CENTER: Kind = Kind::Real { lo: 0.0, hi: 1.0 };
const EXPONENT: Kind = Kind::Real { lo: 1e-3, hi: 16.0 };

/// Admissible range of every mappable control.
fn kind_of(control: &str) -> Option<Kind> {
    let count = |lo, hi| Some(Kind::Count { lo, hi });
    Some(match control {
        "min_z_to_research" => return count(1, 1 << 20),
        "gen_part" => Kind::Real { lo: 0.0, hi: 1.0 },
        "num_samples" => return count(1, 1 << 20),
        "max_tohpe" => return count(0, 1 << 20),
        "tohpe_num_best" => return count(0, 1 << 16),
        "try_only_tohpe" => Kind::Flag,
        "min_pool_size" => return count(0, 1 << 16),
        "max_pool_size" => return count(1, 1 << 16),
        "max_from_single_ns" => return count(1, 1 << 16),
        "min_reduction" => Kind::Signed { lo: -64, hi: 1 << 16 },
        "max_reduction" => Kind::Signed {
            lo: -64,
            hi: i64::from(u32::MAX),
        },
        "beamsearch_width" => return count(1, 256),
        "todd_width" => return count(1, 256),
        "pool_exponent" | "final_exponent" => EXPONENT,
        "temperature" => Kind::Real { lo: TAU_FLOOR, hi: 1e6 },
        "append_z_column" => Kind::ConstFlag,
        "patience" => Kind::ConstCount { lo: 1, hi: 1 << 20 },
        _ => return indexed_kind(control),
    })
}

fn indexed(control: &str) -> Option<(&str, usize)> {
    let (name, idx) = control.split_once('.')?;
    Some((name, idx.parse().ok()?))
}

fn indexed_kind(control: &str) -> Option<Kind> {
    match indexed(control)? {
        ("pool_weights", i) if i < 5 => Some(WEIGHT),
        ("pool_centers", i) if i < 5 => Some(CENTER),
        ("final_weights", i) if i < 6 => Some(WEIGHT),
        ("final_centers", i) if i < 6 => Some(CENTER),
        _ => None,
    }
}

/// Names accepted in a mapping spec. Array controls take an index suffix,
/// e.g. `pool_weights.0`.
pub fn control_names() -> Vec<String> {
    let mut v: Vec<String> = [
        "min_z_to_research",
        "gen_part",
        "num_samples",
        "max_tohpe",
        "tohpe_num_best",
        "try_only_tohpe",
        "min_pool_size",
        "max_pool_size",
        "max_from_single_ns",
        "min_reduction",
        "max_reduction",
        "beamsearch_width",
        "todd_width",
        "pool_exponent",
        "final_exponent",
        "temperature",
        "append_z_column",
        "patience",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 0..5 {
        v.push(format!("pool_weights.{i}"));
        v.push(format!("pool_centers.{i}"));
    }
    for i in 0..6 {
        v.push(format!("final_weights.{i}"));
        v.push(format!("final_centers.{i}"));
    }
    v
}

fn count_of(x: f64, lo: u32, hi: u32) -> u32 {
    x.round().clamp(f64::from(lo), f64::from(hi)) as u32
}

fn signed_of(x: f64, lo: i64, hi: i64) -> i64 {
    x.round().clamp(lo as f64, hi as f64) as i64
}

fn sched<T: Clone>(thr: &[u32], vals: Vec<T>) -> Schedule<T> {
    Schedule::staged(thr.to_vec(), vals).expect("thresholds checked by validate")
}

impl MappingSpec {
    pub fn new(entries: Vec<MappingEntry>) -> Result<Self> {
        let s = Self { entries };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    /// Entry positions grouped by control, in first-appearance order.
    fn groups(&self) -> Vec<(&str, Vec<usize>)> {
        let mut order: Vec<&str> = Vec::new();
        let mut by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            let c = e.control.as_str();
            if !by.contains_key(c) {
                order.push(c);
            }
            by.entry(c).or_default().push(i);
        }
        order.into_iter().map(|c| (c, by.remove(c).unwrap())).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            e.transform.validate()?;
        }
        for (control, idx) in self.groups() {
            let kind = kind_of(control)
                .ok_or_else(|| Error::InvalidMapping(format!("unknown control {control:?}")))?;
            let thr: Vec<Option<u32>> = idx.iter().map(|&i| self.entries[i].rank_thr).collect();
            if matches!(kind, Kind::ConstFlag | Kind::ConstCount { .. }) && thr != [None] {
                return Err(Error::InvalidMapping(format!(
                    "{control} takes exactly one entry without rank_thr"
                )));
            }
            if let Some(pos) = thr.iter().position(|t| t.is_none()) {
                if pos + 1 != thr.len() {
                    return Err(Error::InvalidMapping(format!(
                        "{control}: the entry without rank_thr must come last"
                    )));
                }
            }
            let listed: Vec<u32> = thr.iter().flatten().copied().collect();
            if listed.windows(2).any(|w| w[0] <= w[1]) {
                return Err(Error::InvalidMapping(format!(
                    "{control}: rank_thr values must be strictly decreasing, got {listed:?}"
                )));
            }
        }
        Ok(())
    }

    /// Builds a policy from `base` with every mapped control replaced.
    /// Values are clamped into each control's admissible range, and
    /// `max_reduction` is raised where needed so the reduction range is
    /// never empty.
    pub fn map(&self, base: &Policy, theta: &LatentVector) -> Result<Policy> {
        self.validate()?;
        if theta.len() != self.dim() {
            return Err(Error::LengthMismatch {
                left: self.dim(),
                right: theta.len(),
            });
        }
        let mut pol = base.clone();
        for (control, idx) in self.groups() {
            let mut thr = Vec::new();
            let mut raw = Vec::new();
            let mut has_tail = false;
            for &i in &idx {
                let e = &self.entries[i];
                raw.push(e.transform.apply(theta.coords()[i]));
                match e.rank_thr {
                    Some(r) => thr.push(r),
                    None => has_tail = true,
                }
            }
            set_control(&mut pol, base, control, &thr, &raw, has_tail)?;
        }
        let min_hi = pol.min_reduction.values().iter().copied().max().unwrap_or(0);
        if pol.max_reduction.values().iter().any(|&v| v < min_hi) {
            let vals = pol.max_reduction.values().iter().map(|&v| v.max(min_hi)).collect();
            pol.max_reduction = sched(pol.max_reduction.thresholds(), vals);
        }
        pol.validate()?;
        Ok(pol)
    }
}

/// Writes one control. Without an unthresholded entry the value below the
/// last threshold is the base policy's value at ρ = 0.
fn set_control(
    pol: &mut Policy,
    base: &Policy,
    control: &str,
    thr: &[u32],
    raw: &[f64],
    has_tail: bool,
) -> Result<()> {
    let kind = kind_of(control)
        .ok_or_else(|| Error::InvalidMapping(format!("unknown control {control:?}")))?;
    macro_rules! put {
        ($field:expr, $base:expr, $conv:expr) => {{
            let mut vals: Vec<_> = raw.iter().map(|&x| $conv(x)).collect();
            if !has_tail {
                vals.push($base.eval(0));
            }
            $field = sched(thr, vals);
        }};
    }
    let real = |x: f64| match kind {
        Kind::Real { lo, hi } => x.clamp(lo, hi),
        _ => x,
    };
    let count = |x: f64| match kind {
        Kind::Count { lo, hi } => count_of(x, lo, hi),
        _ => unreachable!(),
    };
    let signed = |x: f64| match kind {
        Kind::Signed { lo, hi } => signed_of(x, lo, hi),
        _ => unreachable!(),
    };
    let flag = |x: f64| x >= 0.5;
    match control {
        "min_z_to_research" => put!(pol.min_z_to_research, base.min_z_to_research, count),
        "gen_part" => put!(pol.gen_part, base.gen_part, real),
        "num_samples" => put!(pol.num_samples, base.num_samples, count),
        "max_tohpe" => put!(pol.max_tohpe, base.max_tohpe, count),
        "tohpe_num_best" => put!(pol.tohpe_num_best, base.tohpe_num_best, count),
        "try_only_tohpe" => put!(pol.try_only_tohpe, base.try_only_tohpe, flag),
        "min_pool_size" => put!(pol.min_pool_size, base.min_pool_size, count),
        "max_pool_size" => put!(pol.max_pool_size, base.max_pool_size, count),
        "max_from_single_ns" => put!(pol.max_from_single_ns, base.max_from_single_ns, count),
        "min_reduction" => put!(pol.min_reduction, base.min_reduction, signed),
        "max_reduction" => put!(pol.max_reduction, base.max_reduction, signed),
        "beamsearch_width" => put!(pol.beamsearch_width, base.beamsearch_width, count),
        "todd_width" => put!(pol.todd_width, base.todd_width, count),
        "pool_exponent" => put!(pol.pool_exponent, base.pool_exponent, real),
        "final_exponent" => put!(pol.final_exponent, base.final_exponent, real),
        "temperature" => put!(pol.temperature, base.temperature, real),
        "append_z_column" => pol.append_z_column = flag(raw[0]),
        "patience" => {
            if let Kind::ConstCount { lo, hi } = kind {
                pol.patience = Some(count_of(raw[0], lo, hi));
            }
        }
        other => {
            let (name, i) = indexed(other).expect("validated control");
            match name {
                "pool_weights" => put!(pol.pool_weights[i], base.pool_weights[i], real),
                "pool_centers" => put!(pol.pool_centers[i], base.pool_centers[i], real),
                "final_weights" => put!(pol.final_weights[i], base.final_weights[i], real),
                "final_centers" => put!(pol.final_centers[i], base.final_centers[i], real),
                _ => unreachable!("validated control"),
            }
        }
    }
    Ok(())
}

/// [`MappingSpec::map`] over the default policy.
pub fn policy_mapping(spec: &MappingSpec, theta: &LatentVector) -> Result<Policy> {
    spec.map(&Policy::default(), theta)
}

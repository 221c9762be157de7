//! Global-best particle swarm over the box `[-2, 2]^d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mapping::{BOX_HI, BOX_LO};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoParams {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoParams {
    /// Constriction-equivalent coefficients.
    fn default() -> Self {
        Self {
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
        }
    }
}

/// Ask/tell swarm state. Positions never leave the box; velocities are
/// limited to the box width.
#[derive(Clone, Debug)]
pub struct ParticleSwarm {
    params: PsoParams,
    pos: Vec<Vec<f64>>,
    vel: Vec<Vec<f64>>,
    best_pos: Vec<Vec<f64>>,
    best_val: Vec<f64>,
    global: Option<(Vec<f64>, f64)>,
    rng: ChaCha8Rng,
}

impl ParticleSwarm {
    /// Uniform positions in the box; `initial`, if given, replaces the
    /// first particle (clamped).
    pub fn new(
        d: usize,
        swarm: usize,
        params: PsoParams,
        seed: u64,
        initial: Option<&[f64]>,
    ) -> Self {
        assert!(d >= 1 && swarm >= 2, "PSO needs d ≥ 1 and at least two particles");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = BOX_HI - BOX_LO;
        let mut pos: Vec<Vec<f64>> = (0..swarm)
            .map(|_| (0..d).map(|_| rng.gen_range(BOX_LO..=BOX_HI)).collect())
            .collect();
        if let Some(x) = initial {
            pos[0] = (0..d)
                .map(|i| x.get(i).copied().unwrap_or(0.0).clamp(BOX_LO, BOX_HI))
                .collect();
        }
        let vel = (0..swarm)
            .map(|_| {
                (0..d)
                    .map(|_| rng.gen_range(-0.5 * width..=0.5 * width) * 0.5)
                    .collect()
            })
            .collect();
        Self {
            params,
            best_pos: pos.clone(),
            best_val: vec![f64::INFINITY; swarm],
            pos,
            vel,
            global: None,
            rng,
        }
    }

    /// Points to evaluate next, in particle order.
    pub fn ask(&self) -> &[Vec<f64>] {
        &self.pos
    }

    /// Records one value per particle (non-finite counts as `+∞`), then
    /// moves the swarm. Ties keep the earlier record and the lower index.
    pub fn tell(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.pos.len());
        for (i, &v) in values.iter().enumerate() {
            let v = if v.is_nan() { f64::INFINITY } else { v };
            if v < self.best_val[i] {
                self.best_val[i] = v;
                self.best_pos[i] = self.pos[i].clone();
            }
            if self.global.as_ref().is_none_or(|(_, g)| v < *g) {
                self.global = Some((self.pos[i].clone(), v));
            }
        }
        let (g, _) = self.global.clone().expect("set above");
        let vmax = BOX_HI - BOX_LO;
        let PsoParams {
            inertia,
            cognitive,
            social,
        } = self.params;
        for i in 0..self.pos.len() {
            for k in 0..self.pos[i].len() {
                let (r1, r2): (f64, f64) = (self.rng.gen(), self.rng.gen());
                let x = self.pos[i][k];
                let v = inertia * self.vel[i][k]
                    + cognitive * r1 * (self.best_pos[i][k] - x)
                    + social * r2 * (g[k] - x);
                let v = v.clamp(-vmax, vmax);
                let nx = (x + v).clamp(BOX_LO, BOX_HI);
                self.vel[i][k] = nx - x;
                self.pos[i][k] = nx;
            }
        }
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.global.as_ref().map(|(x, v)| (x.as_slice(), *v))
    }
}

/// Minimizes `objective` with `swarm` particles for `iters` rounds; each
/// round's particles are evaluated in parallel.
pub fn pso_optimize<F>(
    objective: F,
    d: usize,
    swarm: usize,
    iters: usize,
    seed: u64,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut ps = ParticleSwarm::new(d, swarm, PsoParams::default(), seed, None);
    for _ in 0..iters.max(1) {
        let values: Vec<f64> = ps.ask().par_iter().map(|x| objective(x)).collect();
        ps.tell(&values);
    }
    let (x, v) = ps.best().expect("at least one round");
    (x.to_vec(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_converges() {
        for seed in 0..5 {
            let (x, v) = pso_optimize(sphere, 4, 20, 100, seed);
            assert!(v < 1e-2, "seed {seed}: {v}");
            assert!((sphere(&x) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_objective() {
        let (x, v) = pso_optimize(|_| 3.5, 3, 4, 10, 1);
        assert_eq!(v, 3.5);
        assert!(x.iter().all(|c| (BOX_LO..=BOX_HI).contains(c)));
    }

    #[test]
    fn evaluations_stay_in_the_box() {
        let seen = Mutex::new(Vec::new());
        // Optimum far outside the box pushes particles against the walls.
        pso_optimize(
            |x| {
                seen.lock().unwrap().push(x.to_vec());
                x.iter().map(|v| (v - 50.0).powi(2)).sum()
            },
            3,
            8,
            30,
            2,
        );
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), 8 * 30);
        assert!(seen.iter().flatten().all(|c| (BOX_LO..=BOX_HI).contains(c)));
    }

    #[test]
    fn deterministic() {
        let a = pso_optimize(sphere, 4, 10, 20, 9);
        let b = pso_optimize(sphere, 4, 10, 20, 9);
        assert_eq!(a, b);
    }
}

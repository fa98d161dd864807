//! Particle swarm optimization over a bounded box, and the calibration of
//! fusion weights plus rejection threshold against the four-term CPA/IPR
//! score.
//!
//! The swarm is synchronous: every particle moves against the previous
//! iteration's global best, objective evaluations run in parallel, then the
//! bests update as a sequential barrier. Positions are clipped to the
//! bounds and the touching velocity component is zeroed.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{outcome_counts_raw, score_from_counts};
use crate::fusion::{combine_columns, RejectionPolicy, UncertaintyRecord, ZStats, NUM_COLUMNS};
use crate::rng;

/// Swarm hyperparameters. The velocity update is
/// `v <- w*v + phi_p*r_p.*(p_best - p) + phi_g*r_g.*(g_best - p)`.
#[derive(Debug, Clone)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Per-dimension `[min, max]`.
    pub bounds: Vec<[f64; 2]>,
    pub seed: u64,
}

impl PsoConfig {
    /// Defaults (swarm 40, 200 iterations, w=0.7, phi=1.5) over the given box.
    pub fn new(bounds: Vec<[f64; 2]>, seed: u64) -> Self {
        Self {
            swarm_size: 40,
            iterations: 200,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            bounds,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::config("swarm_size must be at least 2"));
        }
        if self.bounds.is_empty() {
            return Err(Error::config("bounds must be nonempty"));
        }
        for b in &self.bounds {
            if b[0] >= b[1] {
                return Err(Error::config("each bound must satisfy min < max"));
            }
        }
        if self.inertia <= 0.0 || self.cognitive <= 0.0 || self.social <= 0.0 {
            return Err(Error::config("inertia and acceleration must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Particle {
    position: Vec<f64>,
    velocity: Vec<f64>,
    best_position: Vec<f64>,
    best_value: f64,
}

#[derive(Debug, Clone)]
pub struct PsoResult {
    pub best_position: Vec<f64>,
    pub best_value: f64,
    /// Global best value after each iteration; nonincreasing.
    pub history: Vec<f64>,
}

/// Minimize an objective over the configured box. Deterministic per seed.
pub fn pso_minimize<F>(objective: F, cfg: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let dim = cfg.bounds.len();
    let mut gen = rng::seeded(cfg.seed);

    let mut particles: Vec<Particle> = (0..cfg.swarm_size)
        .map(|_| {
            let position: Vec<f64> = cfg
                .bounds
                .iter()
                .map(|b| gen.gen_range(b[0]..=b[1]))
                .collect();
            Particle {
                best_position: position.clone(),
                position,
                velocity: vec![0.0; dim],
                best_value: f64::INFINITY,
            }
        })
        .collect();

    let mut global_best_position = particles[0].position.clone();
    let mut global_best_value = f64::INFINITY;

    let values: Vec<f64> = particles
        .par_iter()
        .map(|p| objective(&p.position))
        .collect();
    for (p, &v) in particles.iter_mut().zip(&values) {
        p.best_value = v;
        if v < global_best_value {
            global_best_value = v;
            global_best_position = p.position.clone();
        }
    }

    let mut history = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        // move every particle against the current global best
        for p in &mut particles {
            for d in 0..dim {
                let rp: f64 = gen.gen();
                let rg: f64 = gen.gen();
                p.velocity[d] = cfg.inertia * p.velocity[d]
                    + cfg.cognitive * rp * (p.best_position[d] - p.position[d])
                    + cfg.social * rg * (global_best_position[d] - p.position[d]);
                p.position[d] += p.velocity[d];
                let [lo, hi] = cfg.bounds[d];
                if p.position[d] <= lo {
                    p.position[d] = lo;
                    p.velocity[d] = 0.0;
                } else if p.position[d] >= hi {
                    p.position[d] = hi;
                    p.velocity[d] = 0.0;
                }
            }
        }
        // parallel evaluation, then a sequential best-update barrier
        let values: Vec<f64> = particles
            .par_iter()
            .map(|p| objective(&p.position))
            .collect();
        for (p, &v) in particles.iter_mut().zip(&values) {
            if v < p.best_value {
                p.best_value = v;
                p.best_position = p.position.clone();
            }
            if v < global_best_value {
                global_best_value = v;
                global_best_position = p.position.clone();
            }
        }
        history.push(global_best_value);
    }

    Ok(PsoResult {
        best_position: global_best_position,
        best_value: global_best_value,
        history,
    })
}

/// The four-term selective score of `(w, tau)` on records under frozen
/// z-stats: `CPA_ai + IPR_ai + CPA_nature + IPR_nature`, in [0, 400].
pub fn rejection_score(
    records: &[UncertaintyRecord],
    zstats: &ZStats,
    weights: &[f64; NUM_COLUMNS],
    tau: f64,
) -> f64 {
    let u: Vec<f64> = records
        .iter()
        .map(|r| combine_columns(&r.columns, zstats, weights))
        .collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let correct: Vec<bool> = records.iter().map(|r| r.is_correct()).collect();
    score_from_counts(&outcome_counts_raw(&labels, &correct, &u, tau))
}

/// Weight bounds for calibration: each fused column weight lives in [0, 1].
pub const WEIGHT_BOUNDS: [f64; 2] = [0.0, 1.0];
/// Threshold bounds on the z-scored combined scale.
pub const TAU_BOUNDS: [f64; 2] = [-10.0, 10.0];

/// Calibrate a rejection policy on scored records: fit z-stats, then run PSO
/// over the 7-dimensional particle `[w_1..w_6, tau]` minimizing the negative
/// four-term score. Swarm parameters come from `cfg`; the search box is
/// fixed to `WEIGHT_BOUNDS` per weight and `TAU_BOUNDS` for the threshold.
pub fn calibrate_policy(records: &[UncertaintyRecord], cfg: &PsoConfig) -> Result<RejectionPolicy> {
    calibrate_policy_with_history(records, cfg).map(|(policy, _)| policy)
}

/// As [`calibrate_policy`], also returning the best achieved score after
/// each iteration (the negated minimizer history).
pub fn calibrate_policy_with_history(
    records: &[UncertaintyRecord],
    cfg: &PsoConfig,
) -> Result<(RejectionPolicy, Vec<f64>)> {
    let has = |label: u8| records.iter().any(|r| r.label == label);
    if !has(0) || !has(1) {
        return Err(Error::SingleClass(if has(0) { 0 } else { 1 }));
    }
    let zstats = crate::fusion::fit_zstats(records)?;
    let mut bounds = vec![WEIGHT_BOUNDS; NUM_COLUMNS];
    bounds.push(TAU_BOUNDS);
    let cfg = PsoConfig {
        bounds,
        ..cfg.clone()
    };
    let objective = |p: &[f64]| -> f64 {
        let weights: [f64; NUM_COLUMNS] = p[..NUM_COLUMNS].try_into().unwrap();
        -rejection_score(records, &zstats, &weights, p[NUM_COLUMNS])
    };
    let result = pso_minimize(objective, &cfg)?;
    let policy = RejectionPolicy {
        zstats,
        weights: result.best_position[..NUM_COLUMNS].try_into().unwrap(),
        tau: result.best_position[NUM_COLUMNS],
    };
    Ok((policy, result.history.iter().map(|v| -v).collect()))
}

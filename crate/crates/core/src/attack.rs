//! FGSM and PGD adversarial perturbations against the head in its input
//! space, under an l-infinity budget with optional box clamping.
//!
//! Attacks are untargeted (they ascend the true-label BCE loss) and start
//! from the clean input. `sign(0) = 0`, so a dead gradient leaves the input
//! untouched. Clamping runs after every perturbation step; for embeddings
//! the box defaults to unbounded, while the normalized-pixel box is
//! available through [`clamp_bounds_from_norm`].

use crate::data::{EmbeddingDataset, Sample};
use crate::error::{Error, Result};
use crate::head::ClassifierHead;

/// Per-coordinate clamp box. A length-1 vector broadcasts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ClampBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                got: max.len(),
            });
        }
        if min.iter().zip(&max).any(|(lo, hi)| lo >= hi) {
            return Err(Error::config("clamp_min must be below clamp_max"));
        }
        Ok(Self { min, max })
    }

    fn bound_at(bounds: &[f64], i: usize) -> f64 {
        if bounds.len() == 1 {
            bounds[0]
        } else {
            bounds[i]
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        for b in [&self.min, &self.max] {
            if b.len() != 1 && b.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: b.len(),
                });
            }
        }
        Ok(())
    }

    fn apply(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            let lo = Self::bound_at(&self.min, i);
            let hi = Self::bound_at(&self.max, i);
            *v = v.clamp(lo, hi);
        }
    }
}

/// Attack budget and schedule. `alpha` defaults to `epsilon / 3` with ten
/// PGD iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    pub clamp: Option<ClampBox>,
}

impl AttackConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            alpha: epsilon / 3.0,
            steps: 10,
            clamp: None,
        }
    }

    pub fn with_clamp(mut self, clamp: ClampBox) -> Self {
        self.clamp = Some(clamp);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::config("epsilon must be nonnegative"));
        }
        if self.alpha > self.epsilon && self.epsilon > 0.0 {
            return Err(Error::config("alpha must not exceed epsilon"));
        }
        if self.steps < 1 {
            return Err(Error::config("steps must be at least 1"));
        }
        Ok(())
    }
}

/// The clamp box of the normalized pixel range `[0, 1]`:
/// `(0 - mean)/std` to `(1 - mean)/std` per channel.
pub fn clamp_bounds_from_norm(mean: &[f64], std: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if mean.len() != std.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: std.len(),
        });
    }
    if std.iter().any(|&s| s <= 0.0) {
        return Err(Error::config("std must be positive"));
    }
    let min = mean.iter().zip(std).map(|(m, s)| (0.0 - m) / s).collect();
    let max = mean.iter().zip(std).map(|(m, s)| (1.0 - m) / s).collect();
    Ok((min, max))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Single-step attack: `x + epsilon * sign(grad_x BCE)`, clamped.
pub fn fgsm(head: &ClassifierHead, x: &[f64], y: u8, cfg: &AttackConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if let Some(c) = &cfg.clamp {
        c.check_dim(x.len())?;
    }
    let grad = head.grad_input(x, y)?;
    let mut adv: Vec<f64> = x
        .iter()
        .zip(grad.iter())
        .map(|(&xi, &g)| xi + cfg.epsilon * sign(g))
        .collect();
    if let Some(c) = &cfg.clamp {
        c.apply(&mut adv);
    }
    Ok(adv)
}

/// Iterated attack: `steps` gradient-sign steps of size `alpha`, each
/// projected back onto the epsilon ball around the clean input and clamped.
pub fn pgd(head: &ClassifierHead, x: &[f64], y: u8, cfg: &AttackConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if let Some(c) = &cfg.clamp {
        c.check_dim(x.len())?;
    }
    let mut adv = x.to_vec();
    for _ in 0..cfg.steps {
        let grad = head.grad_input(&adv, y)?;
        for ((v, &g), &x0) in adv.iter_mut().zip(grad.iter()).zip(x) {
            let stepped = *v + cfg.alpha * sign(g);
            // project onto the l-inf ball in delta space
            let delta = (stepped - x0).clamp(-cfg.epsilon, cfg.epsilon);
            *v = x0 + delta;
        }
        if let Some(c) = &cfg.clamp {
            c.apply(&mut adv);
        }
    }
    Ok(adv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    Fgsm,
    Pgd,
}

/// Perturb every sample of a dataset against its own label.
pub fn attack_dataset(
    head: &ClassifierHead,
    data: &EmbeddingDataset,
    method: AttackMethod,
    cfg: &AttackConfig,
) -> Result<EmbeddingDataset> {
    let samples = data
        .samples()
        .iter()
        .map(|s| {
            let embedding = match method {
                AttackMethod::Fgsm => fgsm(head, &s.embedding, s.label, cfg)?,
                AttackMethod::Pgd => pgd(head, &s.embedding, s.label, cfg)?,
            };
            Ok(Sample {
                id: s.id.clone(),
                embedding,
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EmbeddingDataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::head::{bce_with_logit, train, TrainConfig};
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn linear_head(w: f64) -> ClassifierHead {
        let mut head = ClassifierHead::zeros(&[1, 1, 1, 1], 0.0).unwrap();
        let mut layers = head.layers().to_vec();
        for l in &mut layers {
            l.weight[(0, 0)] = w;
        }
        head = ClassifierHead::new(layers, 0.0).unwrap();
        head
    }

    #[test]
    fn clamp_bounds_hand_values() {
        let (min, max) = clamp_bounds_from_norm(&[0.485], &[0.229]).unwrap();
        assert_relative_eq!(min[0], -2.1179, epsilon = 1e-4);
        assert_relative_eq!(max[0], 2.2489, epsilon = 1e-4);

        let (min, max) = clamp_bounds_from_norm(&[0.0], &[1.0]).unwrap();
        assert_eq!((min[0], max[0]), (0.0, 1.0));

        let (min, max) = clamp_bounds_from_norm(&[0.5], &[0.5]).unwrap();
        assert_eq!((min[0], max[0]), (-1.0, 1.0));
    }

    #[test]
    fn fgsm_zero_epsilon_is_identity() {
        let head = linear_head(0.5);
        let cfg = AttackConfig::new(0.0);
        assert_eq!(fgsm(&head, &[1.5], 1, &cfg).unwrap(), vec![1.5]);
    }

    #[test]
    fn fgsm_zero_network_leaves_input() {
        let head = ClassifierHead::zeros(&[3, 2, 2, 1], 0.0).unwrap();
        let cfg = AttackConfig::new(0.1);
        let x = [0.5, -0.5, 1.0];
        assert_eq!(fgsm(&head, &x, 1, &cfg).unwrap(), x.to_vec());
    }

    #[test]
    fn fgsm_positive_chain_moves_against_true_class() {
        // w > 0, y = 1: loss gradient in x is negative, so the attack
        // steps by -epsilon
        let head = linear_head(0.8);
        let cfg = AttackConfig::new(0.25);
        let adv = fgsm(&head, &[2.0], 1, &cfg).unwrap();
        assert_relative_eq!(adv[0], 1.75, epsilon = 1e-12);
    }

    #[test]
    fn pgd_single_full_step_equals_fgsm() {
        let head = linear_head(0.6);
        let cfg = AttackConfig {
            epsilon: 0.3,
            alpha: 0.3,
            steps: 1,
            clamp: None,
        };
        let x = [1.2];
        assert_eq!(
            pgd(&head, &x, 0, &cfg).unwrap(),
            fgsm(&head, &x, 0, &cfg).unwrap()
        );
    }

    #[test]
    fn pgd_respects_linf_ball_and_clamp() {
        let data = synth_generate(50, 4, 4.0, 3).unwrap();
        let head = train(
            &data,
            &TrainConfig {
                epochs: 20,
                h1: 8,
                h2: 4,
                seed: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let cfg = AttackConfig::new(0.5).with_clamp(ClampBox::new(vec![-3.0], vec![3.0]).unwrap());
        for s in data.samples().iter().take(20) {
            // clean inputs must start inside the box
            let x0: Vec<f64> = s.embedding.iter().map(|v| v.clamp(-3.0, 3.0)).collect();
            let adv = pgd(&head, &x0, s.label, &cfg).unwrap();
            for (a, x) in adv.iter().zip(&x0) {
                assert!((a - x).abs() <= 0.5 + 1e-12);
                assert!((-3.0..=3.0).contains(a));
            }
        }
    }

    #[test]
    fn pgd_ascends_loss() {
        let data = synth_generate(100, 3, 3.0, 7).unwrap();
        let head = train(
            &data,
            &TrainConfig {
                epochs: 30,
                h1: 8,
                h2: 4,
                seed: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let cfg = AttackConfig::new(0.4);
        let mut ascended = 0usize;
        for s in data.samples() {
            let clean = bce_with_logit(head.forward(&s.embedding, None).unwrap(), s.label);
            let adv = pgd(&head, &s.embedding, s.label, &cfg).unwrap();
            let attacked = bce_with_logit(head.forward(&adv, None).unwrap(), s.label);
            if attacked >= clean - 1e-9 {
                ascended += 1;
            }
        }
        // monotone ascent can break at ReLU kinks; statistically it holds
        assert!(
            ascended as f64 >= 0.95 * data.len() as f64,
            "{ascended}/{} ascended",
            data.len()
        );
    }

    #[test]
    fn pgd_flips_at_least_as_many_as_fgsm() {
        let data = synth_generate(150, 3, 3.0, 11).unwrap();
        let head = train(
            &data,
            &TrainConfig {
                epochs: 40,
                h1: 8,
                h2: 4,
                seed: 3,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let cfg = AttackConfig::new(0.6);
        let flips = |attacked: &EmbeddingDataset| -> usize {
            data.samples()
                .iter()
                .zip(attacked.samples())
                .filter(|(clean, adv)| {
                    let before = head.predict_prob(&clean.embedding).unwrap() >= 0.5;
                    let after = head.predict_prob(&adv.embedding).unwrap() >= 0.5;
                    before != after
                })
                .count()
        };
        let f = flips(&attack_dataset(&head, &data, AttackMethod::Fgsm, &cfg).unwrap());
        let p = flips(&attack_dataset(&head, &data, AttackMethod::Pgd, &cfg).unwrap());
        assert!(p >= f, "pgd {p} < fgsm {f}");
    }

    #[test]
    fn clean_inputs_inside_clamp_invariant_at_zero_epsilon() {
        let head = ClassifierHead::init(&[2, 4, 3, 1], 0.0, 9).unwrap();
        let clamp = ClampBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let cfg = AttackConfig {
            epsilon: 0.0,
            alpha: 0.0,
            steps: 10,
            clamp: Some(clamp),
        };
        let mut gen = rng::seeded(4);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| gen.gen_range(-2.0..2.0)).collect();
            assert_eq!(pgd(&head, &x, 0, &cfg).unwrap(), x);
            assert_eq!(fgsm(&head, &x, 0, &cfg).unwrap(), x);
        }
    }
}

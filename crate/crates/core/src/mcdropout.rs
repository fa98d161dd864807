//! Monte-Carlo dropout uncertainty: N stochastic forward passes with dropout
//! kept active, then entropy of the expected probability, expected entropy,
//! and their difference (knowledge uncertainty). Natural log throughout.

use crate::error::{Error, Result};
use crate::head::{sigmoid, ClassifierHead, DropoutMask};
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub n_passes: usize,
    pub seed: u64,
    /// Probabilities are clipped into `[prob_clip, 1 - prob_clip]` to keep
    /// the logs finite.
    pub prob_clip: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_passes: 20,
            seed: 0,
            prob_clip: 1e-7,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.n_passes < 2 {
            return Err(Error::config("n_passes must be at least 2"));
        }
        if !(0.0 < self.prob_clip && self.prob_clip < 0.5) {
            return Err(Error::config("prob_clip must be in (0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct McResult {
    pub probs: Vec<f64>,
    pub entropy_of_expected: f64,
    pub expected_entropy: f64,
    pub knowledge_uncertainty: f64,
    /// Set when the head has dropout rate 0, in which case every pass is
    /// identical and the spread carries no information.
    pub zero_dropout: bool,
}

/// `n_passes` stochastic forward probabilities. The mask for pass `i` is
/// drawn from the stream keyed on `seed ^ i`, so the vector is deterministic
/// per seed and passes are mutually independent.
pub fn mc_passes(head: &ClassifierHead, x: &[f64], cfg: &McConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let hidden = head.hidden_sizes();
    let rate = head.dropout_rate();
    (0..cfg.n_passes)
        .map(|i| {
            let logit = if rate > 0.0 {
                let mut gen = rng::seeded(cfg.seed ^ i as u64);
                let mask = DropoutMask::sample(&hidden, rate, &mut gen);
                head.forward(x, Some(&mask))?
            } else {
                head.forward(x, None)?
            };
            Ok(sigmoid(logit).clamp(cfg.prob_clip, 1.0 - cfg.prob_clip))
        })
        .collect()
}

fn binary_entropy(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
}

/// Binary entropy of the mean probability.
pub fn entropy_of_expected(probs: &[f64]) -> f64 {
    debug_assert!(!probs.is_empty());
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    binary_entropy(mean)
}

/// Mean of the per-pass binary entropies.
pub fn expected_entropy(probs: &[f64]) -> f64 {
    debug_assert!(!probs.is_empty());
    probs.iter().map(|&p| binary_entropy(p)).sum::<f64>() / probs.len() as f64
}

/// Entropy of expected minus expected entropy.
pub fn knowledge_uncertainty(eoe: f64, ee: f64) -> f64 {
    eoe - ee
}

/// Run the passes and aggregate all three metrics.
pub fn mc_dropout(head: &ClassifierHead, x: &[f64], cfg: &McConfig) -> Result<McResult> {
    let probs = mc_passes(head, x, cfg)?;
    let eoe = entropy_of_expected(&probs);
    let ee = expected_entropy(&probs);
    Ok(McResult {
        entropy_of_expected: eoe,
        expected_entropy: ee,
        knowledge_uncertainty: knowledge_uncertainty(eoe, ee),
        zero_dropout: head.dropout_rate() == 0.0,
        probs,
    })
}

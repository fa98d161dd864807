//! Report structures emitted as JSON by `evaluate`, `pipeline`, and
//! `texture-stats`.

use serde::Serialize;

use uqfuse_core::eval::{
    classification_metrics, outcome_counts, rates, score_from_counts, ClassificationMetrics,
    OutcomeCounts, RejectionReport,
};
use uqfuse_core::fusion::{combine, RejectionPolicy, UncertaintyRecord};
use uqfuse_core::texture::{HotellingResult, WelchResult};

use crate::error::Result;

/// Evaluation of one scored split under one policy.
#[derive(Debug, Clone, Serialize)]
pub struct SplitEvaluation {
    pub split: String,
    pub n: usize,
    pub metrics: ClassificationMetrics,
    pub counts: OutcomeCounts,
    pub rates: RejectionReport,
    /// Four-term selective score (CPA + IPR per class).
    pub selective_score: f64,
}

pub fn evaluate_split(
    name: &str,
    records: &[UncertaintyRecord],
    policy: &RejectionPolicy,
) -> Result<SplitEvaluation> {
    let u: Vec<f64> = records.iter().map(|r| combine(r, policy)).collect();
    let counts = outcome_counts(records, &u, policy.tau)?;
    Ok(SplitEvaluation {
        split: name.to_string(),
        n: records.len(),
        metrics: classification_metrics(records)?,
        counts,
        rates: rates(&counts),
        selective_score: score_from_counts(&counts),
    })
}

/// Echo of the policy for provenance in reports.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyEcho {
    pub weights: Vec<f64>,
    pub tau: f64,
}

impl From<&RejectionPolicy> for PolicyEcho {
    fn from(p: &RejectionPolicy) -> Self {
        Self {
            weights: p.weights.to_vec(),
            tau: p.tau,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub policy: PolicyEcho,
    pub evaluation: SplitEvaluation,
}

/// Per-feature and joint statistics for the texture comparison.
#[derive(Debug, Clone, Serialize)]
pub struct TextureReport {
    pub n_real: usize,
    pub n_fake: usize,
    pub bins: usize,
    pub welch: FeatureMap<WelchEcho>,
    pub hotelling: HotellingEcho,
    pub kl: FeatureMap<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureMap<T> {
    pub contrast: T,
    pub energy: T,
    pub entropy: T,
    pub homogeneity: T,
}

impl<T> FeatureMap<T> {
    pub fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        Self {
            contrast: f(0),
            energy: f(1),
            entropy: f(2),
            homogeneity: f(3),
        }
    }

    pub fn get(&self, i: usize) -> &T {
        match i {
            0 => &self.contrast,
            1 => &self.energy,
            2 => &self.entropy,
            _ => &self.homogeneity,
        }
    }
}

pub const FEATURE_NAMES: [&str; 4] = ["contrast", "energy", "entropy", "homogeneity"];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WelchEcho {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

impl From<WelchResult> for WelchEcho {
    fn from(w: WelchResult) -> Self {
        Self {
            t: w.t,
            df: w.df,
            p: w.p,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HotellingEcho {
    pub t2: f64,
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

impl From<HotellingResult> for HotellingEcho {
    fn from(h: HotellingResult) -> Self {
        Self {
            t2: h.t2,
            f: h.f,
            df1: h.df1,
            df2: h.df2,
            p: h.p,
        }
    }
}

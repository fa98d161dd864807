//! Selective-classification accounting: the four accept/reject × correct/
//! incorrect outcome buckets, per-class CPA/IPR and rejection rates, the
//! exhaustive threshold sweep, and standard classification metrics.
//!
//! Acceptance is `u <= tau` throughout; equality accepts. Rates with an
//! empty denominator take the vacuous value 100 and are flagged — a class
//! with nothing to reject must not read as a failure to reject.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::UncertaintyRecord;

/// Outcome counts for one group of samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buckets {
    /// Correct prediction, accepted.
    pub ca: usize,
    /// Correct prediction, rejected.
    pub cr: usize,
    /// Incorrect prediction, accepted.
    pub ia: usize,
    /// Incorrect prediction, rejected.
    pub ir: usize,
}

impl Buckets {
    pub fn total(&self) -> usize {
        self.ca + self.cr + self.ia + self.ir
    }

    fn add(&mut self, correct: bool, accepted: bool) {
        match (correct, accepted) {
            (true, true) => self.ca += 1,
            (true, false) => self.cr += 1,
            (false, true) => self.ia += 1,
            (false, false) => self.ir += 1,
        }
    }
}

/// Overall and per-class outcome counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub overall: Buckets,
    pub ai: Buckets,
    pub nature: Buckets,
}

/// Bucket samples by correctness (from the records) and acceptance
/// (`u <= tau`). `u` must align with `records`.
pub fn outcome_counts(records: &[UncertaintyRecord], u: &[f64], tau: f64) -> Result<OutcomeCounts> {
    if records.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            got: u.len(),
        });
    }
    let mut out = OutcomeCounts::default();
    for (r, &ui) in records.iter().zip(u) {
        let correct = r.is_correct();
        let accepted = ui <= tau;
        out.overall.add(correct, accepted);
        if r.label == 0 {
            out.ai.add(correct, accepted);
        } else {
            out.nature.add(correct, accepted);
        }
    }
    Ok(out)
}

/// A percentage that may be vacuous (empty denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub pct: f64,
    pub vacuous: bool,
}

impl Rate {
    fn from_ratio(num: usize, den: usize) -> Rate {
        if den == 0 {
            Rate {
                pct: 100.0,
                vacuous: true,
            }
        } else {
            Rate {
                pct: 100.0 * num as f64 / den as f64,
                vacuous: false,
            }
        }
    }
}

/// Rejection rates and the CPA/IPR pair for one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    /// `100 * (CR + IR) / n`
    pub total_rejection: Rate,
    /// `100 * CR / (CA + CR)`
    pub correct_rejection: Rate,
    /// `100 * IR / (IA + IR)`
    pub incorrect_rejection: Rate,
    /// Correctly-predicted acceptance, `100 * CA / (CA + CR)`.
    pub cpa: Rate,
    /// Incorrectly-predicted rejection, `100 * IR / (IR + IA)`.
    pub ipr: Rate,
}

impl GroupRates {
    fn from_buckets(b: &Buckets) -> GroupRates {
        GroupRates {
            total_rejection: Rate::from_ratio(b.cr + b.ir, b.total()),
            correct_rejection: Rate::from_ratio(b.cr, b.ca + b.cr),
            incorrect_rejection: Rate::from_ratio(b.ir, b.ia + b.ir),
            cpa: Rate::from_ratio(b.ca, b.ca + b.cr),
            ipr: Rate::from_ratio(b.ir, b.ir + b.ia),
        }
    }
}

/// Per-class and overall rates derived from outcome counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub overall: GroupRates,
    pub ai: GroupRates,
    pub nature: GroupRates,
}

pub fn rates(counts: &OutcomeCounts) -> RejectionReport {
    RejectionReport {
        overall: GroupRates::from_buckets(&counts.overall),
        ai: GroupRates::from_buckets(&counts.ai),
        nature: GroupRates::from_buckets(&counts.nature),
    }
}

/// The calibration objective: `CPA_ai + IPR_ai + CPA_nature + IPR_nature`,
/// in [0, 400], with empty denominators counting 100.
pub fn score_from_counts(counts: &OutcomeCounts) -> f64 {
    let r = rates(counts);
    r.ai.cpa.pct + r.ai.ipr.pct + r.nature.cpa.pct + r.nature.ipr.pct
}

/// Bucket raw correctness/label vectors; the variant scoring paths use when
/// no full records exist.
pub fn outcome_counts_raw(labels: &[u8], correct: &[bool], u: &[f64], tau: f64) -> OutcomeCounts {
    debug_assert_eq!(labels.len(), correct.len());
    debug_assert_eq!(labels.len(), u.len());
    let mut out = OutcomeCounts::default();
    for i in 0..labels.len() {
        let accepted = u[i] <= tau;
        out.overall.add(correct[i], accepted);
        if labels[i] == 0 {
            out.ai.add(correct[i], accepted);
        } else {
            out.nature.add(correct[i], accepted);
        }
    }
    out
}

/// Number of grid points in the exhaustive threshold search.
pub const SWEEP_GRID: usize = 1000;

/// Exhaustive threshold search over a 1000-point grid spanning
/// `[min u, max u]`. Returns the score-maximizing threshold (ties broken
/// toward the smallest) and the full `(tau, score)` curve.
pub fn sweep_threshold(records: &[UncertaintyRecord], u: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if records.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            got: u.len(),
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("sweep needs at least one score"));
    }
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let correct: Vec<bool> = records.iter().map(|r| r.is_correct()).collect();
    Ok(sweep_threshold_raw(&labels, &correct, u))
}

pub fn sweep_threshold_raw(labels: &[u8], correct: &[bool], u: &[f64]) -> (f64, Vec<(f64, f64)>) {
    assert!(!u.is_empty(), "sweep needs at least one score");
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let step = (hi - lo) / (SWEEP_GRID as f64 - 1.0);
    let curve: Vec<(f64, f64)> = (0..SWEEP_GRID)
        .into_par_iter()
        .map(|i| {
            let tau = lo + step * i as f64;
            let score = score_from_counts(&outcome_counts_raw(labels, correct, u, tau));
            (tau, score)
        })
        .collect();
    let mut best = curve[0];
    for &(tau, score) in &curve[1..] {
        if score > best.1 {
            best = (tau, score);
        }
    }
    (best.0, curve)
}

/// Confusion matrix with Nature (label 1) as the positive class:
/// TN = AI→AI, FP = AI→Nature, FN = Nature→AI, TP = Nature→Nature.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
}

impl ClassificationMetrics {
    /// Standard definitions; empty denominators yield 0.
    pub fn from_confusion(cm: ConfusionMatrix) -> Self {
        let n = (cm.tn + cm.fp + cm.fn_ + cm.tp) as f64;
        let accuracy = (cm.tn + cm.tp) as f64 / n;
        let precision = if cm.tp + cm.fp > 0 {
            cm.tp as f64 / (cm.tp + cm.fp) as f64
        } else {
            0.0
        };
        let recall = if cm.tp + cm.fn_ > 0 {
            cm.tp as f64 / (cm.tp + cm.fn_) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassificationMetrics {
            accuracy,
            precision,
            recall,
            f1,
            confusion: cm,
        }
    }
}

/// Accuracy, precision, recall, F1 and the confusion matrix over records.
pub fn classification_metrics(records: &[UncertaintyRecord]) -> Result<ClassificationMetrics> {
    if records.is_empty() {
        return Err(Error::EmptyInput("classification_metrics needs records"));
    }
    let mut cm = ConfusionMatrix::default();
    for r in records {
        match (r.label, r.predicted) {
            (0, 0) => cm.tn += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            (1, 1) => cm.tp += 1,
            _ => return Err(Error::UnknownLabel(r.label.to_string())),
        }
    }
    Ok(ClassificationMetrics::from_confusion(cm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::NUM_COLUMNS;
    use proptest::prelude::*;
    use rand::Rng;

    fn rec(label: u8, predicted: u8) -> UncertaintyRecord {
        UncertaintyRecord {
            id: String::new(),
            label,
            predicted,
            prob: 0.5,
            columns: [0.0; NUM_COLUMNS],
            expected_entropy: 0.0,
        }
    }

    #[test]
    fn all_correct_accepted() {
        let records: Vec<_> = (0..6).map(|i| rec(i % 2, i % 2)).collect();
        let u = vec![0.0; 6];
        let c = outcome_counts(&records, &u, 1.0).unwrap();
        assert_eq!(c.overall.ca, 6);
        assert_eq!(c.overall.total(), 6);
        assert_eq!(c.ai.ca, 3);
        assert_eq!(c.nature.ca, 3);
    }

    #[test]
    fn all_incorrect_rejected() {
        let records: Vec<_> = (0..4).map(|i| rec(i % 2, 1 - i % 2)).collect();
        let u = vec![5.0; 4];
        let c = outcome_counts(&records, &u, 1.0).unwrap();
        assert_eq!(c.overall.ir, 4);
    }

    #[test]
    fn six_sample_hand_enumeration() {
        // (correct, u) with tau = 1.0; u = tau accepts
        let cases = [
            (true, 0.5),
            (true, 1.0),
            (true, 1.5),
            (false, 0.5),
            (false, 1.0),
            (false, 1.5),
        ];
        let records: Vec<_> = cases
            .iter()
            .map(|&(correct, _)| rec(0, if correct { 0 } else { 1 }))
            .collect();
        let u: Vec<f64> = cases.iter().map(|&(_, ui)| ui).collect();
        let c = outcome_counts(&records, &u, 1.0).unwrap();
        assert_eq!((c.ai.ca, c.ai.cr, c.ai.ia, c.ai.ir), (2, 1, 2, 1));
        assert_eq!(c.overall.total(), 6);
    }

    #[test]
    fn rates_hand_values() {
        let b = Buckets {
            ca: 3,
            cr: 1,
            ia: 0,
            ir: 0,
        };
        let r = GroupRates::from_buckets(&b);
        assert_eq!(r.cpa.pct, 75.0);
        assert!(!r.cpa.vacuous);
        assert!(r.ipr.vacuous);
        assert_eq!(r.ipr.pct, 100.0);

        let b = Buckets {
            ca: 1,
            cr: 1,
            ia: 1,
            ir: 1,
        };
        let r = GroupRates::from_buckets(&b);
        assert_eq!(r.total_rejection.pct, 50.0);
        assert_eq!(r.correct_rejection.pct, 50.0);
        assert_eq!(r.incorrect_rejection.pct, 50.0);
    }

    #[test]
    fn score_degenerate_policies() {
        // accepts everything, all correct: CPA=100 both, IPR vacuous 100
        let records: Vec<_> = (0..8).map(|i| rec(i % 2, i % 2)).collect();
        let u = vec![0.0; 8];
        let c = outcome_counts(&records, &u, 1.0).unwrap();
        assert_eq!(score_from_counts(&c), 400.0);

        // rejects everything: CPA=0, IPR=100
        let c = outcome_counts(&records, &u, -1.0).unwrap();
        assert_eq!(score_from_counts(&c), 200.0);
    }

    #[test]
    fn sweep_separable_scores_400() {
        // correct samples below, incorrect above
        let mut records = Vec::new();
        let mut u = Vec::new();
        for i in 0..10u8 {
            let correct = i < 6;
            records.push(rec(i % 2, if correct { i % 2 } else { 1 - i % 2 }));
            u.push(if correct {
                f64::from(i) * 0.1
            } else {
                5.0 + f64::from(i) * 0.1
            });
        }
        let (tau, curve) = sweep_threshold(&records, &u).unwrap();
        let best = curve
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, 400.0);
        assert!(tau > 0.5 && tau < 5.0);
    }

    #[test]
    fn sweep_constant_u_returns_smallest_grid_point() {
        let records: Vec<_> = (0..5).map(|i| rec(i % 2, i % 2)).collect();
        let u = vec![2.5; 5];
        let (tau, curve) = sweep_threshold(&records, &u).unwrap();
        assert_eq!(tau, 2.5);
        assert_eq!(curve.len(), SWEEP_GRID);
        assert!(curve.iter().all(|&(t, _)| t == 2.5));
    }

    #[test]
    fn sweep_matches_finer_grid_oracle() {
        let mut gen = crate::rng::seeded(17);
        for trial in 0..5 {
            let n = 50;
            let records: Vec<_> = (0..n)
                .map(|_| {
                    let label = gen.gen_range(0..2u8);
                    let correct: bool = gen.gen();
                    rec(label, if correct { label } else { 1 - label })
                })
                .collect();
            let u: Vec<f64> = (0..n).map(|_| gen.gen_range(-3.0..3.0)).collect();
            let (tau, curve) = sweep_threshold(&records, &u).unwrap();
            let best = curve
                .iter()
                .map(|&(_, s)| s)
                .fold(f64::NEG_INFINITY, f64::max);

            // 10x finer scan
            let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
            let correct: Vec<bool> = records.iter().map(|r| r.is_correct()).collect();
            let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let fine_n = SWEEP_GRID * 10;
            let fine_step = (hi - lo) / (fine_n as f64 - 1.0);
            let mut fine_best = (lo, f64::NEG_INFINITY);
            for i in 0..fine_n {
                let t = lo + fine_step * i as f64;
                let s = score_from_counts(&outcome_counts_raw(&labels, &correct, &u, t));
                if s > fine_best.1 {
                    fine_best = (t, s);
                }
            }
            let coarse_step = (hi - lo) / (SWEEP_GRID as f64 - 1.0);
            assert!(
                (fine_best.1 - best).abs() < 1e-9,
                "trial {trial}: fine {} vs coarse {best}",
                fine_best.1
            );
            assert!(
                (tau - fine_best.0).abs() <= coarse_step + 1e-12,
                "trial {trial}: tau {tau} vs fine tau {}",
                fine_best.0
            );
        }
    }

    #[test]
    fn metrics_reference_confusion_matrices() {
        // reference confusion matrix: near-perfect classifier
        let m = ClassificationMetrics::from_confusion(ConfusionMatrix {
            tn: 7981,
            fp: 19,
            fn_: 14,
            tp: 7986,
        });
        assert!((m.accuracy - 0.9979).abs() <= 5e-5 + 1e-9);
        assert!((m.precision - 0.9976).abs() <= 5e-5 + 1e-9);
        assert!((m.recall - 0.9982).abs() <= 5e-5 + 1e-9);
        assert!((m.f1 - 0.9979).abs() <= 5e-5 + 1e-9);

        // reference confusion matrix: degraded classifier
        let m = ClassificationMetrics::from_confusion(ConfusionMatrix {
            tn: 1939,
            fp: 4061,
            fn_: 17,
            tp: 5983,
        });
        assert!((m.accuracy - 0.6602).abs() <= 5e-5 + 1e-9);
        assert!((m.precision - 0.5957).abs() <= 5e-5 + 1e-9);
        assert!((m.recall - 0.9972).abs() <= 5e-5 + 1e-9);
        assert!((m.f1 - 0.7458).abs() <= 5e-5 + 1e-9);
    }

    #[test]
    fn metrics_all_correct() {
        let records: Vec<_> = (0..10).map(|i| rec(i % 2, i % 2)).collect();
        let m = classification_metrics(&records).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    proptest! {
        /// CA+CR+IA+IR = n and per-class buckets sum to class sizes.
        #[test]
        fn bucket_partition(
            spec in prop::collection::vec((0u8..2, any::<bool>(), -5.0f64..5.0), 1..60),
            tau in -6.0f64..6.0,
        ) {
            let records: Vec<_> = spec.iter().map(|&(label, correct, _)| {
                rec(label, if correct { label } else { 1 - label })
            }).collect();
            let u: Vec<f64> = spec.iter().map(|&(_, _, ui)| ui).collect();
            let c = outcome_counts(&records, &u, tau).unwrap();
            prop_assert_eq!(c.overall.total(), records.len());
            let n_ai = records.iter().filter(|r| r.label == 0).count();
            prop_assert_eq!(c.ai.total(), n_ai);
            prop_assert_eq!(c.nature.total(), records.len() - n_ai);
        }

        /// Raising tau moves samples only from rejected to accepted buckets.
        #[test]
        fn rejection_monotone_in_tau(
            spec in prop::collection::vec((0u8..2, any::<bool>(), -5.0f64..5.0), 1..60),
            tau1 in -6.0f64..6.0,
            delta in 0.0f64..5.0,
        ) {
            let records: Vec<_> = spec.iter().map(|&(label, correct, _)| {
                rec(label, if correct { label } else { 1 - label })
            }).collect();
            let u: Vec<f64> = spec.iter().map(|&(_, _, ui)| ui).collect();
            let c1 = outcome_counts(&records, &u, tau1).unwrap();
            let c2 = outcome_counts(&records, &u, tau1 + delta).unwrap();
            prop_assert!(c2.overall.cr + c2.overall.ir <= c1.overall.cr + c1.overall.ir);
        }

        /// The swept threshold's score dominates every grid point.
        #[test]
        fn sweep_returns_argmax(
            spec in prop::collection::vec((0u8..2, any::<bool>(), -5.0f64..5.0), 2..40),
        ) {
            let records: Vec<_> = spec.iter().map(|&(label, correct, _)| {
                rec(label, if correct { label } else { 1 - label })
            }).collect();
            let u: Vec<f64> = spec.iter().map(|&(_, _, ui)| ui).collect();
            let (tau, curve) = sweep_threshold(&records, &u).unwrap();
            let at_tau = score_from_counts(&outcome_counts(&records, &u, tau).unwrap());
            for &(_, s) in &curve {
                prop_assert!(at_tau >= s - 1e-12);
            }
        }
    }
}

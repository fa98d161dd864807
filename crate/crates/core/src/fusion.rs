//! Assembling the per-sample uncertainty matrix, z-score normalization,
//! linear fusion into one scalar, and the rejection rule.
//!
//! The six-column order is frozen — the fusion weight vector indexes it:
//! `fisher_total_u, fisher_frob_u, fisher_ent_u, gp_var, eoe, ku`.
//! Expected entropy is computed and reported alongside but never fused.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::fisher;
use crate::gp::SparseGp;
use crate::head::ClassifierHead;
use crate::mcdropout::{mc_dropout, McConfig};
use crate::rng;

pub const NUM_COLUMNS: usize = 6;

/// Column names in the frozen fusion order.
pub const COLUMN_NAMES: [&str; NUM_COLUMNS] = [
    "fisher_total_u",
    "fisher_frob_u",
    "fisher_ent_u",
    "gp_var",
    "eoe",
    "ku",
];

/// One scored sample: prediction, evaluation-mode probability, and the six
/// uncertainty values in fusion order. `expected_entropy` rides along for
/// reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyRecord {
    pub id: String,
    pub label: u8,
    pub predicted: u8,
    pub prob: f64,
    pub columns: [f64; NUM_COLUMNS],
    pub expected_entropy: f64,
}

impl UncertaintyRecord {
    pub fn is_correct(&self) -> bool {
        self.predicted == self.label
    }
}

/// Per-column mean and population standard deviation frozen at calibration
/// time. Columns with (numerically) zero spread are flagged and normalize
/// to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZStats {
    pub mean: [f64; NUM_COLUMNS],
    pub std: [f64; NUM_COLUMNS],
    pub constant: [bool; NUM_COLUMNS],
}

impl ZStats {
    /// Z-score one record's columns; constant columns map to 0.
    pub fn normalize(&self, columns: &[f64; NUM_COLUMNS]) -> [f64; NUM_COLUMNS] {
        let mut out = [0.0; NUM_COLUMNS];
        for j in 0..NUM_COLUMNS {
            if !self.constant[j] {
                out[j] = (columns[j] - self.mean[j]) / self.std[j];
            }
        }
        out
    }
}

/// The deployable calibrated artifact: frozen z-stats, fusion weights, and
/// the rejection threshold. A sample is rejected when its combined score
/// exceeds `tau`; equality accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionPolicy {
    pub zstats: ZStats,
    pub weights: [f64; NUM_COLUMNS],
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

/// Combined uncertainty: the weighted sum of z-scored columns.
pub fn combine(record: &UncertaintyRecord, policy: &RejectionPolicy) -> f64 {
    combine_columns(&record.columns, &policy.zstats, &policy.weights)
}

pub fn combine_columns(
    columns: &[f64; NUM_COLUMNS],
    zstats: &ZStats,
    weights: &[f64; NUM_COLUMNS],
) -> f64 {
    let z = zstats.normalize(columns);
    z.iter().zip(weights).map(|(zi, wi)| zi * wi).sum()
}

/// Reject iff `u > tau`; the boundary accepts.
pub fn decide(u: f64, tau: f64) -> Decision {
    if u > tau {
        Decision::Reject
    } else {
        Decision::Accept
    }
}

/// Per-column population statistics over a calibration split.
pub fn fit_zstats(records: &[UncertaintyRecord]) -> Result<ZStats> {
    if records.len() < 2 {
        return Err(Error::EmptyInput("fit_zstats needs at least 2 records"));
    }
    let n = records.len() as f64;
    let mut mean = [0.0; NUM_COLUMNS];
    for r in records {
        for j in 0..NUM_COLUMNS {
            mean[j] += r.columns[j];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = [0.0; NUM_COLUMNS];
    for r in records {
        for j in 0..NUM_COLUMNS {
            let d = r.columns[j] - mean[j];
            std[j] += d * d;
        }
    }
    let mut constant = [false; NUM_COLUMNS];
    for j in 0..NUM_COLUMNS {
        std[j] = (std[j] / n).sqrt();
        if std[j] < 1e-12 {
            constant[j] = true;
            std[j] = 1.0;
        }
    }
    Ok(ZStats {
        mean,
        std,
        constant,
    })
}

/// Score every sample of a dataset: head prediction plus all six
/// uncertainty columns. One record per sample, in dataset order.
///
/// The MC-dropout stream for sample `i` is keyed on
/// `rng::derive(mc_cfg.seed, i)`, so records are independent of evaluation
/// order and scoring parallelizes freely.
pub fn score_all(
    head: &ClassifierHead,
    gp: &SparseGp,
    data: &EmbeddingDataset,
    mc_cfg: &McConfig,
) -> Result<Vec<UncertaintyRecord>> {
    if head.input_dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: head.input_dim(),
            got: data.dim(),
        });
    }
    if gp.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: gp.dim(),
            got: data.dim(),
        });
    }
    let predictor = gp.predictor()?;
    data.samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let prob = head.predict_prob(&s.embedding)?;
            let predicted = u8::from(prob >= 0.5);
            let fsum = fisher::summarize(&fisher::fim_diag(head, &s.embedding)?);
            let (_, gp_var) = predictor.latent(&s.embedding)?;
            let mc = mc_dropout(
                head,
                &s.embedding,
                &McConfig {
                    seed: rng::derive(mc_cfg.seed, i as u64),
                    ..*mc_cfg
                },
            )?;
            let record = UncertaintyRecord {
                id: s.id.clone(),
                label: s.label,
                predicted,
                prob,
                columns: [
                    fsum.fisher_total_u,
                    fsum.fisher_frobenius_u,
                    fsum.fisher_entropy_u,
                    gp_var,
                    mc.entropy_of_expected,
                    mc.knowledge_uncertainty,
                ],
                expected_entropy: mc.expected_entropy,
            };
            debug_assert!(record.columns[..3].iter().all(|&v| v > 0.0));
            debug_assert!(record.columns[3] > 0.0);
            debug_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&record.columns[4]));
            debug_assert!(record.columns[5] >= -1e-9);
            Ok(record)
        })
        .collect()
}

const SCORE_HEADER: &str =
    "id,label,pred,prob,fisher_total_u,fisher_frob_u,fisher_ent_u,gp_var,eoe,ku,ee";

/// Write records as the score CSV.
pub fn save_scores(records: &[UncertaintyRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{SCORE_HEADER}")?;
        for r in records {
            write!(w, "{},{},{},{}", r.id, r.label, r.predicted, r.prob)?;
            for c in &r.columns {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{}", r.expected_entropy)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Read a score CSV back into records.
pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<UncertaintyRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(Error::EmptyInput("score csv has no header"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    if header.trim_end() != SCORE_HEADER {
        return Err(Error::Malformed {
            format: "score csv",
            line: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Malformed {
                format: "score csv",
                line: lineno,
                msg: format!("expected 11 fields, found {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::Malformed {
                format: "score csv",
                line: lineno,
                msg: format!("invalid number {s:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Malformed {
                    format: "score csv",
                    line: lineno,
                    msg: format!("non-finite value {s:?}"),
                });
            }
            Ok(v)
        };
        let label = match fields[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::UnknownLabel(other.to_string())),
        };
        let predicted = match fields[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::UnknownLabel(other.to_string())),
        };
        let mut columns = [0.0; NUM_COLUMNS];
        for (j, col) in columns.iter_mut().enumerate() {
            *col = num(fields[4 + j])?;
        }
        records.push(UncertaintyRecord {
            id: fields[0].to_string(),
            label,
            predicted,
            prob: num(fields[3])?,
            columns,
            expected_entropy: num(fields[10])?,
        });
    }
    Ok(records)
}

const POLICY_SCHEMA: &str = "policy/1";

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    schema: String,
    mean: Vec<f64>,
    std: Vec<f64>,
    constant_flags: Vec<bool>,
    weights: Vec<f64>,
    tau: f64,
}

impl RejectionPolicy {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = PolicyFile {
            schema: POLICY_SCHEMA.to_string(),
            mean: self.zstats.mean.to_vec(),
            std: self.zstats.std.to_vec(),
            constant_flags: self.zstats.constant.to_vec(),
            weights: self.weights.to_vec(),
            tau: self.tau,
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Numerical(format!("policy serialization failed: {e}")))?;
        std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let file: PolicyFile = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            format: "policy json",
            line: 0,
            msg: e.to_string(),
        })?;
        if file.schema != POLICY_SCHEMA {
            return Err(Error::Malformed {
                format: "policy json",
                line: 0,
                msg: format!("unsupported schema {:?}", file.schema),
            });
        }
        let arr = |v: &[f64]| -> Result<[f64; NUM_COLUMNS]> {
            v.try_into().map_err(|_| Error::Malformed {
                format: "policy json",
                line: 0,
                msg: format!("expected {NUM_COLUMNS} entries"),
            })
        };
        Ok(RejectionPolicy {
            zstats: ZStats {
                mean: arr(&file.mean)?,
                std: arr(&file.std)?,
                constant: file.constant_flags.as_slice().try_into().map_err(|_| {
                    Error::Malformed {
                        format: "policy json",
                        line: 0,
                        msg: format!("expected {NUM_COLUMNS} flags"),
                    }
                })?,
            },
            weights: arr(&file.weights)?,
            tau: file.tau,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::gp::{fit_gp, GpFitConfig, RbfKernel, SparseGp};
    use crate::head::{train, ClassifierHead, TrainConfig};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn rec(columns: [f64; NUM_COLUMNS]) -> UncertaintyRecord {
        UncertaintyRecord {
            id: "x".into(),
            label: 0,
            predicted: 0,
            prob: 0.5,
            columns,
            expected_entropy: 0.0,
        }
    }

    #[test]
    fn zstats_hand_case() {
        let records: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&v| rec([v; NUM_COLUMNS]))
            .collect();
        let z = fit_zstats(&records).unwrap();
        assert_relative_eq!(z.mean[0], 2.0, epsilon = 1e-15);
        assert_relative_eq!(z.std[0], (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(z.std[0], 0.8165, epsilon = 1e-4);
    }

    #[test]
    fn zstats_constant_column_flagged() {
        let records: Vec<_> = (0..3).map(|_| rec([5.0; NUM_COLUMNS])).collect();
        let z = fit_zstats(&records).unwrap();
        assert!(z.constant.iter().all(|&f| f));
        assert_eq!(z.normalize(&[5.0; NUM_COLUMNS]), [0.0; NUM_COLUMNS]);
        // even off-mean values normalize to 0 for constant columns
        assert_eq!(z.normalize(&[7.0; NUM_COLUMNS]), [0.0; NUM_COLUMNS]);
    }

    #[test]
    fn zstats_pair() {
        let records: Vec<_> = [0.0, 2.0].iter().map(|&v| rec([v; NUM_COLUMNS])).collect();
        let z = fit_zstats(&records).unwrap();
        assert_eq!(z.mean[0], 1.0);
        assert_eq!(z.std[0], 1.0);
        assert_eq!(z.normalize(&records[0].columns)[0], -1.0);
        assert_eq!(z.normalize(&records[1].columns)[0], 1.0);
    }

    fn policy_with(zstats: ZStats, weights: [f64; NUM_COLUMNS], tau: f64) -> RejectionPolicy {
        RejectionPolicy {
            zstats,
            weights,
            tau,
        }
    }

    #[test]
    fn combine_one_hot_recovers_zscore() {
        let records: Vec<_> = (0..5)
            .map(|i| {
                let mut c = [0.0; NUM_COLUMNS];
                for (j, v) in c.iter_mut().enumerate() {
                    *v = (i * (j + 1)) as f64;
                }
                rec(c)
            })
            .collect();
        let z = fit_zstats(&records).unwrap();
        for j in 0..NUM_COLUMNS {
            let mut w = [0.0; NUM_COLUMNS];
            w[j] = 1.0;
            let p = policy_with(z.clone(), w, 0.0);
            for r in &records {
                assert_relative_eq!(combine(r, &p), z.normalize(&r.columns)[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn combine_hand_case_and_zero_weights() {
        // x_norm = [1, -2, 0, 0, 0, 0], w = [0.5, 0.25, 0, 0, 0, 0] -> u = 0
        let z = ZStats {
            mean: [0.0; NUM_COLUMNS],
            std: [1.0; NUM_COLUMNS],
            constant: [false; NUM_COLUMNS],
        };
        let mut w = [0.0; NUM_COLUMNS];
        w[0] = 0.5;
        w[1] = 0.25;
        let p = policy_with(z.clone(), w, 0.0);
        let r = rec([1.0, -2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(combine(&r, &p), 0.0);

        let p0 = policy_with(z, [0.0; NUM_COLUMNS], 0.0);
        assert_eq!(combine(&r, &p0), 0.0);
    }

    #[test]
    fn decide_boundary_convention() {
        assert_eq!(decide(1.0, 1.0), Decision::Accept);
        assert_eq!(decide(1.0 + 1e-15, 1.0), Decision::Reject);
        assert_eq!(decide(0.999, 1.0), Decision::Accept);
    }

    #[test]
    fn score_all_composed_trivial_case() {
        // zero head + prior GP: prob 0.5, predicted 1 (tie rule),
        // eoe = ln 2, ku = 0
        let data = synth_generate(5, 2, 1.0, 3).unwrap();
        let head = ClassifierHead::zeros(&[2, 3, 2, 1], 0.5).unwrap();
        let kernel = RbfKernel::new(1.0, 1.0).unwrap();
        let inducing = DMatrix::from_fn(4, 2, |r, c| (r + c) as f64);
        let gp = SparseGp::prior(inducing, kernel, 1e-6).unwrap();
        let records = score_all(&head, &gp, &data, &McConfig::default()).unwrap();
        assert_eq!(records.len(), data.len());
        for r in &records {
            assert_eq!(r.prob, 0.5);
            assert_eq!(r.predicted, 1);
            assert_relative_eq!(r.columns[4], std::f64::consts::LN_2, epsilon = 1e-12);
            assert!(r.columns[5].abs() < 1e-12);
            assert_relative_eq!(r.columns[3], 1.0, epsilon = 1e-8); // prior variance
        }
    }

    #[test]
    fn score_all_matches_standalone_modules_bitwise() {
        let data = synth_generate(10, 2, 3.0, 5).unwrap();
        let head = train(
            &data,
            &TrainConfig {
                epochs: 10,
                h1: 8,
                h2: 4,
                seed: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let gp = fit_gp(
            &data,
            &GpFitConfig {
                m_per_class: 4,
                elbo_steps: 20,
                seed: 2,
                ..GpFitConfig::default()
            },
        )
        .unwrap();
        let mc_cfg = McConfig {
            seed: 77,
            ..McConfig::default()
        };
        let records = score_all(&head, &gp, &data, &mc_cfg).unwrap();
        let predictor = gp.predictor().unwrap();
        for (i, s) in data.samples().iter().enumerate() {
            let r = &records[i];
            let fsum = fisher::summarize(&fisher::fim_diag(&head, &s.embedding).unwrap());
            assert_eq!(r.columns[0].to_bits(), fsum.fisher_total_u.to_bits());
            assert_eq!(r.columns[1].to_bits(), fsum.fisher_frobenius_u.to_bits());
            assert_eq!(r.columns[2].to_bits(), fsum.fisher_entropy_u.to_bits());
            let (_, var) = predictor.latent(&s.embedding).unwrap();
            assert_eq!(r.columns[3].to_bits(), var.to_bits());
            let mc = mc_dropout(
                &head,
                &s.embedding,
                &McConfig {
                    seed: rng::derive(77, i as u64),
                    ..mc_cfg
                },
            )
            .unwrap();
            assert_eq!(r.columns[4].to_bits(), mc.entropy_of_expected.to_bits());
            assert_eq!(r.columns[5].to_bits(), mc.knowledge_uncertainty.to_bits());
        }
    }

    #[test]
    fn scores_roundtrip_bitwise_and_policy_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let data = synth_generate(8, 2, 2.0, 9).unwrap();
        let head = ClassifierHead::init(&[2, 4, 3, 1], 0.5, 3).unwrap();
        let kernel = RbfKernel::new(1.2, 0.8).unwrap();
        let gp = SparseGp::prior(
            DMatrix::from_fn(4, 2, |r, c| (r as f64) - c as f64),
            kernel,
            1e-6,
        )
        .unwrap();
        let records = score_all(&head, &gp, &data, &McConfig::default()).unwrap();
        let p = dir.path().join("scores.csv");
        save_scores(&records, &p).unwrap();
        let back = load_scores(&p).unwrap();
        assert_eq!(records.len(), back.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.prob.to_bits(), b.prob.to_bits());
            for j in 0..NUM_COLUMNS {
                assert_eq!(a.columns[j].to_bits(), b.columns[j].to_bits());
            }
        }

        let z = fit_zstats(&records).unwrap();
        let policy = policy_with(z, [0.3, 0.0, 0.1, 0.5, 0.2, 0.0], 1.25);
        let pp = dir.path().join("policy.json");
        policy.save(&pp).unwrap();
        assert_eq!(RejectionPolicy::load(&pp).unwrap(), policy);
    }

    proptest! {
        /// Shifting or positively scaling a raw column and refitting leaves
        /// all z-scores, u values, and decisions unchanged.
        #[test]
        fn affine_invariance(
            vals in prop::collection::vec(-50.0f64..50.0, 4..30),
            shift in -100.0f64..100.0,
            scale in 0.01f64..100.0,
            tau in -2.0f64..2.0,
        ) {
            let records: Vec<_> = vals.iter().enumerate().map(|(i, &v)| {
                let mut c = [0.0; NUM_COLUMNS];
                for (j, cv) in c.iter_mut().enumerate() {
                    *cv = v + (i * j) as f64 * 0.1;
                }
                rec(c)
            }).collect();
            let transformed: Vec<_> = records.iter().map(|r| {
                let mut c = r.columns;
                c[0] = c[0] * scale + shift;
                rec(c)
            }).collect();

            let z1 = fit_zstats(&records).unwrap();
            let z2 = fit_zstats(&transformed).unwrap();
            let w = [0.4, 0.1, 0.2, 0.05, 0.15, 0.1];
            let p1 = RejectionPolicy { zstats: z1, weights: w, tau };
            let p2 = RejectionPolicy { zstats: z2, weights: w, tau };
            for (a, b) in records.iter().zip(&transformed) {
                let u1 = combine(a, &p1);
                let u2 = combine(b, &p2);
                prop_assert!((u1 - u2).abs() < 1e-9);
                prop_assert_eq!(decide(u1, tau), decide(u2, tau));
            }
        }

        /// Accept/reject partitions every dataset.
        #[test]
        fn decide_partitions(us in prop::collection::vec(-10.0f64..10.0, 1..50), tau in -5.0f64..5.0) {
            let accepted = us.iter().filter(|&&u| decide(u, tau) == Decision::Accept).count();
            let rejected = us.iter().filter(|&&u| decide(u, tau) == Decision::Reject).count();
            prop_assert_eq!(accepted + rejected, us.len());
        }
    }
}

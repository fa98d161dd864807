//! End-to-end orchestration: generate data, train the head, fit the GP,
//! score the splits, calibrate the policy, evaluate in- and
//! out-of-distribution. Every artifact lands in the output directory and
//! the whole run is a pure function of the configuration.

use serde::Serialize;
use std::path::{Path, PathBuf};

use uqfuse_core::data::{save_dataset, synth_generate, synth_shift, Format, MeanShift, ShiftSpec};
use uqfuse_core::fusion::{save_scores, score_all};
use uqfuse_core::gp::fit_gp;
use uqfuse_core::head;
use uqfuse_core::pso::calibrate_policy;
use uqfuse_core::rng;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::report::{evaluate_split, PolicyEcho, SplitEvaluation};

/// Seed streams for each pipeline stage, derived from the master seed.
mod streams {
    pub const TRAIN_DATA: u64 = 10;
    pub const CALIB_DATA: u64 = 11;
    pub const TEST_DATA: u64 = 12;
    pub const SHIFT: u64 = 13;
    pub const HEAD: u64 = 20;
    pub const GP: u64 = 21;
    pub const MC_CALIB: u64 = 30;
    pub const MC_SHIFT: u64 = 31;
    pub const PSO: u64 = 40;
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub policy: PolicyEcho,
    pub splits: Vec<SplitEvaluation>,
}

#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub out_dir: PathBuf,
    pub report: PipelineReport,
}

/// File names produced inside the output directory.
pub const ARTIFACT_FILES: [&str; 9] = [
    "train.csv",
    "calibration.csv",
    "test_shifted.csv",
    "head.json",
    "gp.json",
    "scores_calibration.csv",
    "scores_shifted.csv",
    "policy.json",
    "report.json",
];

pub fn run_pipeline(
    cfg: &PipelineConfig,
    out_dir: &Path,
    quiet: bool,
) -> Result<PipelineArtifacts> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        CliError::io(
            format!("cannot create output directory {}: {e}", out_dir.display()),
            Some(out_dir.display().to_string()),
        )
    })?;
    let say = |msg: &str| {
        if !quiet {
            println!("{msg}");
        }
    };

    let d = &cfg.data;
    let train_data = synth_generate(
        d.n_train_per_class,
        d.dim,
        d.separation,
        rng::derive(cfg.seed, streams::TRAIN_DATA),
    )?;
    let calib_data = synth_generate(
        d.n_calib_per_class,
        d.dim,
        d.separation,
        rng::derive(cfg.seed, streams::CALIB_DATA),
    )?;
    let test_base = synth_generate(
        d.n_test_per_class,
        d.dim,
        d.separation,
        rng::derive(cfg.seed, streams::TEST_DATA),
    )?;
    let shifted = synth_shift(
        &test_base,
        &ShiftSpec {
            mean_shift: MeanShift::Scalar(cfg.shift.mean_shift),
            covariance_scale: cfg.shift.covariance_scale,
            seed: rng::derive(cfg.seed, streams::SHIFT),
        },
    )?;
    save_dataset(&train_data, out_dir.join("train.csv"), Format::Csv)?;
    save_dataset(&calib_data, out_dir.join("calibration.csv"), Format::Csv)?;
    save_dataset(&shifted, out_dir.join("test_shifted.csv"), Format::Csv)?;
    say(&format!(
        "generated {} train / {} calibration / {} shifted-test samples (dim {})",
        train_data.len(),
        calib_data.len(),
        shifted.len(),
        d.dim
    ));

    let head_model = head::train(
        &train_data,
        &cfg.train_config(rng::derive(cfg.seed, streams::HEAD))?,
    )?;
    head_model.save(out_dir.join("head.json"))?;
    say(&format!(
        "trained head: train accuracy {:.4}",
        head_model.accuracy(&train_data)?
    ));

    let gp = fit_gp(
        &train_data,
        &cfg.gp_config(rng::derive(cfg.seed, streams::GP)),
    )?;
    gp.save(out_dir.join("gp.json"))?;
    say(&format!(
        "fitted sparse GP: {} inducing points, length scale {:.4}",
        gp.num_inducing(),
        gp.kernel().length_scale()
    ));

    let calib_records = score_all(
        &head_model,
        &gp,
        &calib_data,
        &cfg.mc_config(rng::derive(cfg.seed, streams::MC_CALIB)),
    )?;
    save_scores(&calib_records, out_dir.join("scores_calibration.csv"))?;
    let shift_records = score_all(
        &head_model,
        &gp,
        &shifted,
        &cfg.mc_config(rng::derive(cfg.seed, streams::MC_SHIFT)),
    )?;
    save_scores(&shift_records, out_dir.join("scores_shifted.csv"))?;
    say("scored calibration and shifted splits");

    let policy = calibrate_policy(
        &calib_records,
        &cfg.pso_config(rng::derive(cfg.seed, streams::PSO)),
    )?;
    policy.save(out_dir.join("policy.json"))?;
    say(&format!(
        "calibrated policy: weights {:?}, tau {:.4}",
        policy.weights, policy.tau
    ));

    let splits = vec![
        evaluate_split("calibration", &calib_records, &policy)?,
        evaluate_split("shifted", &shift_records, &policy)?,
    ];
    let report = PipelineReport {
        config: cfg.clone(),
        policy: PolicyEcho::from(&policy),
        splits,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::config(format!("report serialization failed: {e}")))?;
    std::fs::write(out_dir.join("report.json"), json).map_err(|e| {
        CliError::io(
            format!("cannot write report: {e}"),
            Some(out_dir.join("report.json").display().to_string()),
        )
    })?;
    for s in &report.splits {
        say(&format!(
            "{}: accuracy {:.4}, selective score {:.1}, AI IPR {:.1}%, Nature CR {:.1}%",
            s.split,
            s.metrics.accuracy,
            s.selective_score,
            s.rates.ai.ipr.pct,
            s.rates.nature.correct_rejection.pct
        ));
    }

    Ok(PipelineArtifacts {
        out_dir: out_dir.to_path_buf(),
        report,
    })
}

//! Subcommand definitions and their implementations.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use uqfuse_core::attack::{attack_dataset, AttackConfig, AttackMethod};
use uqfuse_core::data::{
    load_dataset, save_dataset, synth_generate, synth_shift, Format, MeanShift, ShiftSpec,
};
use uqfuse_core::eval::sweep_threshold;
use uqfuse_core::fusion::{
    combine, load_scores, save_scores, score_all, RejectionPolicy, UncertaintyRecord,
};
use uqfuse_core::gp::{fit_gp, SparseGp};
use uqfuse_core::head::{self, ClassifierHead};
use uqfuse_core::pso::calibrate_policy_with_history;
use uqfuse_core::texture;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::pipeline::run_pipeline;
use crate::report::{
    evaluate_split, EvaluationReport, FeatureMap, HotellingEcho, PolicyEcho, TextureReport,
    WelchEcho, FEATURE_NAMES,
};

#[derive(Parser, Debug)]
#[command(
    name = "uqfuse",
    version,
    about = "Uncertainty fusion for selective binary classification over embeddings"
)]
pub struct Cli {
    /// TOML configuration file (pipeline defaults; flags override).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; subcommand --seed flags take precedence.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Rayon thread count (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Suppress informational output.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic two-blob embedding dataset.
    Gen(GenArgs),
    /// Apply a distribution shift to the AI class of a dataset.
    Shift(ShiftArgs),
    /// Train the classification head.
    TrainHead(TrainHeadArgs),
    /// Fit the sparse variational GP.
    FitGp(FitGpArgs),
    /// Score a dataset: predictions plus all six uncertainty columns.
    Score(ScoreArgs),
    /// PSO-calibrate fusion weights and threshold on scored records.
    Calibrate(CalibrateArgs),
    /// Exhaustive threshold sweep over one uncertainty column.
    Sweep(SweepArgs),
    /// Evaluate a policy on scored records.
    Evaluate(EvaluateArgs),
    /// Perturb a dataset with FGSM or PGD against a trained head.
    Attack(AttackArgs),
    /// GLCM texture statistics comparing real and fake image sets.
    TextureStats(TextureStatsArgs),
    /// Run the full pipeline: gen, train, fit, score, calibrate, evaluate.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Samples per class.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dim: usize,
    /// Distance between the class means along every coordinate.
    #[arg(long)]
    pub sep: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ShiftArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Broadcast mean translation of the AI class.
    #[arg(long)]
    pub mean_shift: f64,
    #[arg(long)]
    pub cov_scale: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainHeadArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub h1: Option<usize>,
    #[arg(long)]
    pub h2: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitGpArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub m_per_class: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub gp: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub mc_passes: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub swarm: usize,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Policy JSON output; the best-score history lands next to it as
    /// `<out>.history.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepColumn {
    FisherTotalU,
    FisherFrobU,
    FisherEntU,
    GpVar,
    Eoe,
    Ku,
    /// Probability baseline: `1 - max(p, 1-p)`.
    Prob,
    /// Combined score under a calibrated policy (requires --policy).
    Combined,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum)]
    pub column: SweepColumn,
    /// Required when --column combined.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Curve CSV output (`tau,score` rows).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Fgsm,
    Pgd,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub eps: f64,
    /// PGD step size; defaults to eps/3.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Optional clamp box as `min,max` applied to every coordinate.
    #[arg(long)]
    pub clamp: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TextureStatsArgs {
    /// Directory of P5 PGM images, or a feature CSV
    /// (`label,contrast,energy,entropy,homogeneity`; label 1 rows used).
    #[arg(long)]
    pub real: PathBuf,
    /// As --real but for the fake side (label 0 rows used from CSV).
    #[arg(long)]
    pub fake: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Report JSON path; `<stem>.csv` and `<stem>_long.csv` land next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Format inferred from the output/input path extension.
fn infer_format(path: &Path) -> Format {
    Format::from_path(path)
}

fn say(quiet: bool, msg: String) {
    if !quiet {
        println!("{msg}");
    }
}

pub struct Ctx {
    pub config: PipelineConfig,
    pub global_seed: Option<u64>,
    pub quiet: bool,
}

impl Ctx {
    /// Seed precedence: subcommand flag, then global flag, then config.
    fn seed(&self, local: Option<u64>) -> u64 {
        local.or(self.global_seed).unwrap_or(self.config.seed)
    }
}

pub fn dispatch(cmd: Command, ctx: &Ctx) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a, ctx),
        Command::Shift(a) => cmd_shift(a, ctx),
        Command::TrainHead(a) => cmd_train_head(a, ctx),
        Command::FitGp(a) => cmd_fit_gp(a, ctx),
        Command::Score(a) => cmd_score(a, ctx),
        Command::Calibrate(a) => cmd_calibrate(a, ctx),
        Command::Sweep(a) => cmd_sweep(a, ctx),
        Command::Evaluate(a) => cmd_evaluate(a, ctx),
        Command::Attack(a) => cmd_attack(a, ctx),
        Command::TextureStats(a) => cmd_texture_stats(a, ctx),
        Command::Pipeline(a) => {
            run_pipeline(&ctx.config, &a.out_dir, ctx.quiet)?;
            Ok(())
        }
    }
}

fn cmd_gen(a: GenArgs, ctx: &Ctx) -> Result<()> {
    let ds = synth_generate(a.n, a.dim, a.sep, ctx.seed(a.seed))?;
    save_dataset(&ds, &a.out, infer_format(&a.out))?;
    say(
        ctx.quiet,
        format!(
            "wrote {} samples (dim {}) to {}",
            ds.len(),
            ds.dim(),
            a.out.display()
        ),
    );
    Ok(())
}

fn cmd_shift(a: ShiftArgs, ctx: &Ctx) -> Result<()> {
    let base = load_dataset(&a.input, infer_format(&a.input))?;
    let shifted = synth_shift(
        &base,
        &ShiftSpec {
            mean_shift: MeanShift::Scalar(a.mean_shift),
            covariance_scale: a.cov_scale,
            seed: ctx.seed(a.seed),
        },
    )?;
    save_dataset(&shifted, &a.out, infer_format(&a.out))?;
    say(
        ctx.quiet,
        format!("wrote shifted dataset to {}", a.out.display()),
    );
    Ok(())
}

fn cmd_train_head(a: TrainHeadArgs, ctx: &Ctx) -> Result<()> {
    let data = load_dataset(&a.data, infer_format(&a.data))?;
    let mut cfg = ctx.config.train_config(ctx.seed(a.seed))?;
    if let Some(v) = a.h1 {
        cfg.h1 = v;
    }
    if let Some(v) = a.h2 {
        cfg.h2 = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.dropout {
        cfg.dropout_rate = v;
    }
    let model = head::train(&data, &cfg)?;
    model.save(&a.out)?;
    say(
        ctx.quiet,
        format!(
            "trained head ({} params), train accuracy {:.4}, saved to {}",
            model.param_count(),
            model.accuracy(&data)?,
            a.out.display()
        ),
    );
    Ok(())
}

fn cmd_fit_gp(a: FitGpArgs, ctx: &Ctx) -> Result<()> {
    let data = load_dataset(&a.data, infer_format(&a.data))?;
    let mut cfg = ctx.config.gp_config(ctx.seed(a.seed));
    if let Some(v) = a.m_per_class {
        cfg.m_per_class = v;
    }
    if let Some(v) = a.steps {
        cfg.elbo_steps = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.mc_samples {
        cfg.mc_elbo_samples = v;
    }
    let gp = fit_gp(&data, &cfg)?;
    gp.save(&a.out)?;
    say(
        ctx.quiet,
        format!(
            "fitted GP ({} inducing, ls {:.4}, os {:.4}), saved to {}",
            gp.num_inducing(),
            gp.kernel().length_scale(),
            gp.kernel().output_scale(),
            a.out.display()
        ),
    );
    Ok(())
}

fn cmd_score(a: ScoreArgs, ctx: &Ctx) -> Result<()> {
    let model = ClassifierHead::load(&a.head)?;
    let gp = SparseGp::load(&a.gp)?;
    let data = load_dataset(&a.data, infer_format(&a.data))?;
    let mut mc = ctx.config.mc_config(ctx.seed(a.seed));
    mc.n_passes = a.mc_passes;
    let records = score_all(&model, &gp, &data, &mc)?;
    save_scores(&records, &a.out)?;
    say(
        ctx.quiet,
        format!("scored {} samples to {}", records.len(), a.out.display()),
    );
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs, ctx: &Ctx) -> Result<()> {
    let records = load_scores(&a.scores)?;
    let mut cfg = ctx.config.pso_config(ctx.seed(a.seed));
    cfg.swarm_size = a.swarm;
    cfg.iterations = a.iters;
    let (policy, history) = calibrate_policy_with_history(&records, &cfg)?;
    policy.save(&a.out)?;

    // per-iteration best-score history for plotting
    let history_path = a.out.with_extension("history.csv");
    {
        let file = File::create(&history_path)
            .map_err(|e| CliError::io(e.to_string(), Some(history_path.display().to_string())))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "iteration,best_score").map_err(|e| CliError::io(e.to_string(), None))?;
        for (i, v) in history.iter().enumerate() {
            writeln!(w, "{},{v}", i + 1).map_err(|e| CliError::io(e.to_string(), None))?;
        }
    }
    say(
        ctx.quiet,
        format!(
            "calibrated policy (weights {:?}, tau {:.4}) to {}; history in {}",
            policy.weights,
            policy.tau,
            a.out.display(),
            history_path.display()
        ),
    );
    Ok(())
}

/// The uncertainty scalar a sweep column assigns to one record.
pub fn column_value(
    col: SweepColumn,
    record: &UncertaintyRecord,
    policy: Option<&RejectionPolicy>,
) -> f64 {
    match col {
        SweepColumn::FisherTotalU => record.columns[0],
        SweepColumn::FisherFrobU => record.columns[1],
        SweepColumn::FisherEntU => record.columns[2],
        SweepColumn::GpVar => record.columns[3],
        SweepColumn::Eoe => record.columns[4],
        SweepColumn::Ku => record.columns[5],
        SweepColumn::Prob => 1.0 - record.prob.max(1.0 - record.prob),
        SweepColumn::Combined => combine(record, policy.expect("checked by caller")),
    }
}

fn cmd_sweep(a: SweepArgs, ctx: &Ctx) -> Result<()> {
    let records = load_scores(&a.scores)?;
    let policy = match (&a.policy, a.column) {
        (Some(p), _) => Some(RejectionPolicy::load(p)?),
        (None, SweepColumn::Combined) => {
            return Err(CliError::config(
                "--column combined requires --policy <path>",
            ))
        }
        (None, _) => None,
    };
    let u: Vec<f64> = records
        .iter()
        .map(|r| column_value(a.column, r, policy.as_ref()))
        .collect();
    let (tau_star, curve) = sweep_threshold(&records, &u)?;
    let file = File::create(&a.out)
        .map_err(|e| CliError::io(e.to_string(), Some(a.out.display().to_string())))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "tau,score")?;
        for (tau, score) in &curve {
            writeln!(w, "{tau},{score}")?;
        }
        w.flush()
    })()
    .map_err(|e| CliError::io(e.to_string(), Some(a.out.display().to_string())))?;
    let best = curve
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    say(
        ctx.quiet,
        format!(
            "sweep over {:?}: tau* = {tau_star}, score {best:.2}; curve in {}",
            a.column,
            a.out.display()
        ),
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, ctx: &Ctx) -> Result<()> {
    let records = load_scores(&a.scores)?;
    let policy = RejectionPolicy::load(&a.policy)?;
    let name = a
        .scores
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scores".into());
    let evaluation = evaluate_split(&name, &records, &policy)?;
    let report = EvaluationReport {
        policy: PolicyEcho::from(&policy),
        evaluation,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::config(format!("report serialization failed: {e}")))?;
    std::fs::write(&a.report, json)
        .map_err(|e| CliError::io(e.to_string(), Some(a.report.display().to_string())))?;
    say(
        ctx.quiet,
        format!(
            "evaluated {} records: accuracy {:.4}, selective score {:.1}; report in {}",
            report.evaluation.n,
            report.evaluation.metrics.accuracy,
            report.evaluation.selective_score,
            a.report.display()
        ),
    );
    Ok(())
}

fn cmd_attack(a: AttackArgs, ctx: &Ctx) -> Result<()> {
    let model = ClassifierHead::load(&a.head)?;
    let data = load_dataset(&a.data, infer_format(&a.data))?;
    let mut cfg = AttackConfig::new(a.eps);
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    cfg.steps = a.steps;
    if let Some(spec) = &a.clamp {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.len() != 2 {
            return Err(CliError::config("--clamp expects `min,max`"));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| CliError::config("invalid clamp min"))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| CliError::config("invalid clamp max"))?;
        cfg = cfg.with_clamp(uqfuse_core::attack::ClampBox::new(vec![lo], vec![hi])?);
    }
    let method = match a.method {
        MethodArg::Fgsm => AttackMethod::Fgsm,
        MethodArg::Pgd => AttackMethod::Pgd,
    };
    let adv = attack_dataset(&model, &data, method, &cfg)?;
    save_dataset(&adv, &a.out, infer_format(&a.out))?;
    say(
        ctx.quiet,
        format!(
            "attacked {} samples ({:?}, eps {}), accuracy {:.4} -> {:.4}, wrote {}",
            adv.len(),
            a.method,
            a.eps,
            model.accuracy(&data)?,
            model.accuracy(&adv)?,
            a.out.display()
        ),
    );
    Ok(())
}

/// Feature rows for one side of the texture comparison.
fn texture_side(path: &Path, want_label: u8) -> Result<Vec<[f64; 4]>> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::io(e.to_string(), Some(path.display().to_string())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("pgm"))
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(CliError::io(
                format!("no .pgm files in {}", path.display()),
                Some(path.display().to_string()),
            ));
        }
        entries
            .iter()
            .map(|p| {
                let img = texture::read_pgm(p)?;
                let f = texture::image_features(&img)?;
                Ok([f.contrast, f.energy, f.entropy, f.homogeneity])
            })
            .collect()
    } else {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(e.to_string(), Some(path.display().to_string())))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::config("empty feature csv"))?;
        if header.trim() != "label,contrast,energy,entropy,homogeneity" {
            return Err(CliError::config(format!(
                "unexpected feature csv header {header:?}"
            )));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(CliError::config(format!(
                    "feature csv line {}: expected 5 fields",
                    i + 2
                )));
            }
            let label: u8 = fields[0]
                .parse()
                .map_err(|_| CliError::config(format!("feature csv line {}: bad label", i + 2)))?;
            if label != want_label {
                continue;
            }
            let mut row = [0.0; 4];
            for (j, r) in row.iter_mut().enumerate() {
                *r = fields[j + 1].parse().map_err(|_| {
                    CliError::config(format!("feature csv line {}: bad number", i + 2))
                })?;
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(CliError::config(format!(
                "no rows with label {want_label} in {}",
                path.display()
            )));
        }
        Ok(rows)
    }
}

fn cmd_texture_stats(a: TextureStatsArgs, ctx: &Ctx) -> Result<()> {
    let real = texture_side(&a.real, 1)?;
    let fake = texture_side(&a.fake, 0)?;
    let col = |rows: &[[f64; 4]], j: usize| -> Vec<f64> { rows.iter().map(|r| r[j]).collect() };

    let mut welch = Vec::new();
    let mut kl = Vec::new();
    for j in 0..4 {
        welch.push(WelchEcho::from(texture::welch_t(
            &col(&real, j),
            &col(&fake, j),
        )?));
        kl.push(texture::kl_divergence(
            &col(&real, j),
            &col(&fake, j),
            a.bins,
        )?);
    }
    let to_matrix =
        |rows: &[[f64; 4]]| nalgebra::DMatrix::from_fn(rows.len(), 4, |r, c| rows[r][c]);
    let hotelling =
        HotellingEcho::from(texture::hotelling_t2(&to_matrix(&real), &to_matrix(&fake))?);

    let report = TextureReport {
        n_real: real.len(),
        n_fake: fake.len(),
        bins: a.bins,
        welch: FeatureMap::from_fn(|j| welch[j]),
        hotelling,
        kl: FeatureMap::from_fn(|j| kl[j]),
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::config(format!("report serialization failed: {e}")))?;
    std::fs::write(&a.out, json)
        .map_err(|e| CliError::io(e.to_string(), Some(a.out.display().to_string())))?;

    // Table-shaped CSV next to the JSON
    let csv_path = a.out.with_extension("csv");
    let mut w = BufWriter::new(
        File::create(&csv_path)
            .map_err(|e| CliError::io(e.to_string(), Some(csv_path.display().to_string())))?,
    );
    (|| -> std::io::Result<()> {
        writeln!(w, "statistic,contrast,energy,entropy,homogeneity")?;
        let row = |name: &str, f: &dyn Fn(usize) -> f64| -> String {
            format!("{name},{},{},{},{}", f(0), f(1), f(2), f(3))
        };
        writeln!(w, "{}", row("welch_t", &|j| report.welch.get(j).t))?;
        writeln!(w, "{}", row("welch_df", &|j| report.welch.get(j).df))?;
        writeln!(w, "{}", row("welch_p", &|j| report.welch.get(j).p))?;
        writeln!(w, "{}", row("kl", &|j| *report.kl.get(j)))?;
        writeln!(w, "hotelling_t2,{},,,", report.hotelling.t2)?;
        writeln!(w, "hotelling_p,{},,,", report.hotelling.p)?;
        w.flush()
    })()
    .map_err(|e| CliError::io(e.to_string(), Some(csv_path.display().to_string())))?;

    // long-format CSV for pairplots
    let long_path = {
        let stem = a.out.file_stem().unwrap_or_default().to_string_lossy();
        a.out.with_file_name(format!("{stem}_long.csv"))
    };
    let mut w = BufWriter::new(
        File::create(&long_path)
            .map_err(|e| CliError::io(e.to_string(), Some(long_path.display().to_string())))?,
    );
    (|| -> std::io::Result<()> {
        writeln!(w, "side,feature,value")?;
        for (side, rows) in [("real", &real), ("fake", &fake)] {
            for row in rows.iter() {
                for (j, name) in FEATURE_NAMES.iter().enumerate() {
                    writeln!(w, "{side},{name},{}", row[j])?;
                }
            }
        }
        w.flush()
    })()
    .map_err(|e| CliError::io(e.to_string(), Some(long_path.display().to_string())))?;

    say(
        ctx.quiet,
        format!(
            "texture stats over {} real / {} fake: T2 {:.2} (p {:.4}); report in {}",
            report.n_real,
            report.n_fake,
            report.hotelling.t2,
            report.hotelling.p,
            a.out.display()
        ),
    );
    Ok(())
}

//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success, `--help`, `--version` |
//! | 1 | usage or configuration error, protocol violation |
//! | 2 | data error (parse failure, invalid curve, class too small) |
//! | 3 | numerical failure |

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::congeal::{congeal, CongealConfig, EnabledTransforms, TransformFamily};
use crate::curves::{Curve, CurveSet};
use crate::error::{Error, ErrorClass, Result};
use crate::evalkit::{evaluate_cv, evaluate_split, EvalConfig, EvalMode, PairedEval};
use crate::io::{self, DatasetFile, DatasetFormat, InputDigest, RunManifest};
use crate::objective::ObjectiveKind;
use crate::synthgen::{builtin_curve, generate, recovery_error, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const SYNTH_DATASET_FILE: &str = "dataset.csv";
pub const SYNTH_TRUTH_FILE: &str = "ground_truth.csv";
pub const SYNTH_SEED_FILE: &str = "seed.csv";

#[derive(Debug, Parser)]
#[command(
    name = "curvecongeal",
    version,
    about = "Joint alignment of 1-D curves by congealing"
)]
struct Cli {
    /// Record wall-clock start and finish times in manifest.json. Makes
    /// repeated runs differ byte-wise.
    #[arg(long, global = true)]
    timestamps: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Congeal every curve of a dataset jointly.
    Align(AlignArgs),
    /// Generate a synthetic dataset of corrupted copies of a seed curve.
    Synth(SynthArgs),
    /// k-NN classification with and without alignment.
    Classify(ClassifyArgs),
    /// Re-align a dataset written by `synth` and report recovery error.
    Recover(RecoverArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Ucr,
    Csv,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Ucr => DatasetFormat::Ucr,
            FormatArg::Csv => DatasetFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Entropy,
    Variance,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Entropy => ObjectiveKind::EntropySum,
            ObjectiveArg::Variance => ObjectiveKind::VarianceSum,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Warp,
    Scale,
    Offset,
}

impl From<FamilyArg> for TransformFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Warp => TransformFamily::TimeWarp,
            FamilyArg::Scale => TransformFamily::AmplitudeScale,
            FamilyArg::Offset => TransformFamily::AmplitudeOffset,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Supervised,
    Unsupervised,
    None,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Supervised => EvalMode::Supervised,
            ModeArg::Unsupervised => EvalMode::Unsupervised,
            ModeArg::None => EvalMode::NoAlignment,
        }
    }
}

#[derive(Debug, Args)]
struct OptimizerArgs {
    /// Comma-separated transform families: warp, scale, offset.
    #[arg(long, value_delimiter = ',', value_enum)]
    transforms: Option<Vec<FamilyArg>>,
    #[arg(long, value_enum, default_value = "entropy")]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl OptimizerArgs {
    fn config(&self, default_transforms: EnabledTransforms) -> CongealConfig {
        let transforms = match &self.transforms {
            None => default_transforms,
            Some(list) => list
                .iter()
                .fold(EnabledTransforms::NONE, |acc, f| acc.with((*f).into())),
        };
        CongealConfig {
            objective_kind: self.objective.into(),
            transforms,
            max_iterations: self.max_iters,
            rng_seed: self.seed,
            ..CongealConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "ucr")]
    format: FormatArg,
    #[command(flatten)]
    opt: OptimizerArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Corruption level, 1 to 5.
    #[arg(long)]
    difficulty: u8,
    #[arg(long, default_value_t = 50)]
    copies: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `builtin:<name>` or a file whose first row is the seed curve.
    #[arg(long, default_value = "builtin:bumps2")]
    seed_curve: String,
    /// Format of a seed-curve file.
    #[arg(long, value_enum, default_value = "csv")]
    seed_format: FormatArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Labeled dataset (the training split when --test is given).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "ucr")]
    format: FormatArg,
    #[arg(long, value_enum, default_value = "unsupervised")]
    mode: ModeArg,
    /// Fixed test split; otherwise stratified cross-validation is used.
    #[arg(long, conflicts_with = "folds")]
    test: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    opt: OptimizerArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecoverArgs {
    /// Directory written by `synth`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the alignment report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code. Diagnostics go to stderr, summaries to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Align(a) => cmd_align(a, cli.timestamps),
        Command::Synth(a) => cmd_synth(a, cli.timestamps),
        Command::Classify(a) => cmd_classify(a, cli.timestamps),
        Command::Recover(a) => cmd_recover(a, cli.timestamps),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn unix_now() -> Option<u64> {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

fn manifest(command: &str, seed: u64, config: serde_json::Value, timestamps: bool) -> RunManifest {
    let mut m = RunManifest::new(command, seed, config);
    if timestamps {
        m.started_at_unix = unix_now();
    }
    m
}

fn finish(mut m: RunManifest, timestamps: bool) -> RunManifest {
    if timestamps {
        m.finished_at_unix = unix_now();
    }
    m
}

fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn cmd_align(a: &AlignArgs, timestamps: bool) -> Result<()> {
    let config = a.opt.config(EnabledTransforms::ALL);
    config.validate()?;
    let set = io::read_dataset(&a.input, a.format.into())?;
    let mut m = manifest(
        "align",
        config.rng_seed,
        json!({ "format": DatasetFormat::from(a.format), "congeal": to_json(&config) }),
        timestamps,
    );
    m.inputs.push(InputDigest::of_file(&a.input)?);
    let report = congeal(&set, &config)?;
    let m = finish(m, timestamps);
    io::write_report(&report, &a.out, &m)?;
    println!(
        "aligned {} curves: objective {:.6} -> {:.6} in {} iterations{}",
        set.len(),
        report.initial_objective,
        report.final_objective(),
        report.iterations_run,
        if report.converged { " (converged)" } else { "" },
    );
    Ok(())
}

fn load_seed_curve(spec: &str, format: DatasetFormat) -> Result<(Curve, Option<InputDigest>)> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Ok((builtin_curve(name)?, None));
    }
    let path = Path::new(spec);
    let data = io::read_dataset_file(path, format)?;
    let first = data
        .rows
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidCurve(format!("{spec}: no seed curve")))?;
    Ok((
        Curve::new(first).map_err(|e| e.in_file(path))?,
        Some(InputDigest::of_file(path)?),
    ))
}

fn cmd_synth(a: &SynthArgs, timestamps: bool) -> Result<()> {
    let (seed_curve, digest) = load_seed_curve(&a.seed_curve, a.seed_format.into())?;
    let family: TransformFamily = a.family.into();
    let mut spec = SynthSpec::new(seed_curve, family, a.difficulty, a.seed);
    spec.copies = a.copies;
    spec.validate()?;
    let mut m = manifest(
        "synth",
        a.seed,
        json!({
            "family": family.short_name(),
            "difficulty": a.difficulty,
            "copies": a.copies,
            "seed_curve": a.seed_curve,
            "range_scale": spec.range_scale,
        }),
        timestamps,
    );
    m.inputs.extend(digest);
    let data = generate(&spec)?;
    io::ensure_dir(&a.out)?;
    io::write_dataset(
        &data.curves,
        &a.out.join(SYNTH_DATASET_FILE),
        DatasetFormat::Csv,
    )?;
    io::write_params_table(&data.ground_truth, &a.out.join(SYNTH_TRUTH_FILE))?;
    let seed_text = io::render_dataset(
        &DatasetFile::from_curves(std::slice::from_ref(&data.seed_curve), None),
        DatasetFormat::Csv,
    )?;
    io::write_file(&a.out.join(SYNTH_SEED_FILE), &seed_text)?;
    finish(m, timestamps).write(&a.out)?;
    println!(
        "wrote {} copies ({} family, difficulty {}) to {}",
        a.copies,
        family.short_name(),
        a.difficulty,
        a.out.display()
    );
    Ok(())
}

fn print_paired(result: &PairedEval) {
    println!("mode: {:?}", result.mode);
    println!(
        "baseline accuracy: {:.4} (mean fold {:.4})",
        result.baseline.accuracy,
        result.baseline.mean_fold_accuracy()
    );
    println!(
        "aligned accuracy:  {:.4} (mean fold {:.4})",
        result.aligned.accuracy,
        result.aligned.mean_fold_accuracy()
    );
    let delta = result.improvement();
    if delta < 0.0 {
        println!("alignment DECREASED mean accuracy by {:.4}", -delta);
    } else {
        println!("alignment changed mean accuracy by {delta:+.4}");
    }
}

fn cmd_classify(a: &ClassifyArgs, timestamps: bool) -> Result<()> {
    let mode: EvalMode = a.mode.into();
    let config = EvalConfig {
        k_neighbors: a.k,
        folds: a.folds.unwrap_or(EvalConfig::default().folds),
        mode,
        congeal_config: a
            .opt
            .config(EnabledTransforms::only(TransformFamily::TimeWarp)),
        rng_seed: a.opt.seed,
    };
    config.validate()?;
    config.congeal_config.validate()?;
    if mode == EvalMode::Supervised && a.test.is_some() {
        log::warn!("supervised alignment uses test labels; its accuracy is optimistic");
    }
    let train = io::read_dataset(&a.input, a.format.into())?;
    let mut m = manifest("classify", config.rng_seed, to_json(&config), timestamps);
    m.inputs.push(InputDigest::of_file(&a.input)?);
    let result = match &a.test {
        Some(test_path) => {
            let test = io::read_dataset(test_path, a.format.into())?;
            m.inputs.push(InputDigest::of_file(test_path)?);
            evaluate_split(&train, &test, &config)?
        }
        None => evaluate_cv(&train, &config)?,
    };
    print_paired(&result);
    if let Some(out) = &a.out {
        io::ensure_dir(out)?;
        let mut text = serde_json::to_string_pretty(&result)
            .map_err(|e| Error::Numerical(format!("result serialization: {e}")))?;
        text.push('\n');
        io::write_file(&out.join("results.json"), &text)?;
        finish(m, timestamps).write(out)?;
    }
    Ok(())
}

fn cmd_recover(a: &RecoverArgs, timestamps: bool) -> Result<()> {
    let source = RunManifest::read(&a.dataset)?;
    let family = source
        .config
        .get("family")
        .and_then(|v| v.as_str())
        .and_then(TransformFamily::from_short_name)
        .ok_or_else(|| {
            Error::Config(format!(
                "{}: not a synth output directory",
                a.dataset.display()
            ))
        })?;
    let set: CurveSet = io::read_dataset(&a.dataset.join(SYNTH_DATASET_FILE), DatasetFormat::Csv)?;
    let seed_path = a.dataset.join(SYNTH_SEED_FILE);
    let (seed, _) = load_seed_curve(&seed_path.display().to_string(), DatasetFormat::Csv)?;
    let config = CongealConfig {
        objective_kind: ObjectiveKind::VarianceSum,
        transforms: EnabledTransforms::only(family),
        max_iterations: a.max_iters,
        rng_seed: a.seed,
        ..CongealConfig::default()
    };
    let before = recovery_error(set.curves(), &seed)?;
    let report = congeal(&set, &config)?;
    let after = recovery_error(report.aligned_curves(), &seed)?;
    println!("recovery_error before: {}", io::format_real(before));
    println!("recovery_error after:  {}", io::format_real(after));
    println!("ratio: {:.6}", after / before);
    if let Some(out) = &a.out {
        let mut m = manifest(
            "recover",
            a.seed,
            json!({ "congeal": to_json(&config) }),
            timestamps,
        );
        m.inputs
            .push(InputDigest::of_file(&a.dataset.join(SYNTH_DATASET_FILE))?);
        m.inputs.push(InputDigest::of_file(&seed_path)?);
        io::write_report(&report, out, &finish(m, timestamps))?;
    }
    Ok(())
}

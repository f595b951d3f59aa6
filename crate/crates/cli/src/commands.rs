//! Argument parsing and the handler for each subcommand.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chemimg::dataset::{LabelMode, OversamplePolicy};
use chemimg::encode::{EncodeConfig, RotationMode};
use chemimg::metrics::MetricKind;
use chemimg::raster::{export_png_preview, read_tensor_file, write_tensor_file, SchemaKind, DEFAULT_NOISE_DENSITY};
use chemimg::synth::{functional_group_task, random_molecules};
use chemimg_nn::{load_model, Arch, Model, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controls::{run_ablation, run_controls, NOISE_AUC_BAND, TRUTH_MIN_AUC};
use crate::experiment::{
    encode_dataset, head_for, load_dataset, read_config, read_split, split_dataset, task_index, write_json,
    ExperimentConfig, SplitParams,
};
use crate::{train_error, CliError};

#[derive(Debug, Parser)]
#[command(name = "chemimg", version, about = "Chemical structure images and CNN experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode a SMILES CSV into a CIMG tensor file.
    Encode(EncodeArgs),
    /// Write a train/validation/test split manifest.
    Split(SplitArgs),
    /// Train the network on one or all folds.
    Train(TrainArgs),
    /// Score a trained run or a single model.
    Evaluate(EvaluateArgs),
    /// Run the Truth and Noise control experiments.
    Controls(ControlsArgs),
    /// Compare schemas under identical training settings.
    Ablation(AblationArgs),
    /// Export one image channel as a PNG.
    Preview(PreviewArgs),
    /// Generate a synthetic labeled SMILES CSV.
    Synth(SynthArgs),
}

fn parse_schema(s: &str) -> Result<SchemaKind, String> {
    s.parse::<SchemaKind>().map_err(|e| e.to_string())
}

fn parse_arch(s: &str) -> Result<String, String> {
    s.parse::<Arch>().map(|a| a.to_string()).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelModeArg {
    Auto,
    Classification,
    Regression,
}

impl From<LabelModeArg> for LabelMode {
    fn from(m: LabelModeArg) -> LabelMode {
        match m {
            LabelModeArg::Auto => LabelMode::Auto,
            LabelModeArg::Classification => LabelMode::Classification,
            LabelModeArg::Regression => LabelMode::Regression,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataOpts {
    /// CSV with a `smiles` column; every other column is a label.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub label_mode: LabelModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeOpts {
    /// std|reda|redb|enga|engb|engc|engd|noise|truth|scrambled
    #[arg(long, value_parser = parse_schema, default_value = "std")]
    pub schema: SchemaKind,
    #[arg(long, default_value_t = DEFAULT_NOISE_DENSITY)]
    pub noise_density: f64,
    /// Label column that Truth images follow (default: the first).
    #[arg(long)]
    pub truth_task: Option<String>,
    /// Rotate finished images instead of re-drawing rotated coordinates.
    #[arg(long)]
    pub pixel_rotation: bool,
}

impl EncodeOpts {
    fn config(&self, seed: u64, truth_task: usize) -> EncodeConfig {
        let mut cfg = EncodeConfig::new(self.schema);
        cfg.noise_density = self.noise_density;
        cfg.seed = seed;
        cfg.truth_task = truth_task;
        if self.pixel_rotation {
            cfg.rotation = RotationMode::Pixels;
        }
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct SplitOpts {
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Balance folds on this label column.
    #[arg(long)]
    pub stratify: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    /// Architecture T<blocks per stage>_F<filters>.
    #[arg(long, value_parser = parse_arch, default_value = "T1_F32")]
    pub arch: String,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 25)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Random rotation augmentation (default on).
    #[arg(long, overrides_with = "no_rotate")]
    pub rotate: bool,
    #[arg(long)]
    pub no_rotate: bool,
    /// Per-channel input standardization (default on for engineered schemas).
    #[arg(long, overrides_with = "no_standardize")]
    pub standardize: bool,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub residual_scale: f64,
    /// Oversample the minority class of this label column in training folds.
    #[arg(long)]
    pub oversample_task: Option<String>,
    /// Count the original record among the copies (total) or on top of them (appended).
    #[arg(long, value_enum, default_value = "total")]
    pub oversample_policy: PolicyArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Total,
    Appended,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub encode: EncodeOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub split: SplitOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Manifest path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Replay a saved config.json; other run options are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV with a `smiles` column; every other column is a label.
    #[arg(long, required_unless_present = "config")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub label_mode: LabelModeArg,
    #[command(flatten)]
    pub encode: EncodeOpts,
    #[command(flatten)]
    pub split: SplitOpts,
    /// Existing split manifest.
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    /// Train only this fold (default: every fold).
    #[arg(long)]
    pub fold: Option<usize>,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory for config, split, histories, models and metrics.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output directory of a `train` run.
    #[arg(long, conflicts_with = "model")]
    pub run: Option<PathBuf>,
    /// A single checkpoint, scored on `--input`.
    #[arg(long, requires = "input")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = parse_schema, default_value = "std")]
    pub schema: SchemaKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct ControlsArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub split: SplitOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long, default_value_t = DEFAULT_NOISE_DENSITY)]
    pub noise_density: f64,
    /// Noise runs use each seed; Truth uses the first.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Draw Truth images from shuffled labels; the Truth control should then fail.
    #[arg(long)]
    pub shuffle_truth_labels: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub split: SplitOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long, value_delimiter = ',', value_parser = parse_schema, default_value = "reda,redb,std")]
    pub schemas: Vec<SchemaKind>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Train only this fold of each split (default: every fold).
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    /// Read the image from a CIMG file ...
    #[arg(long, conflicts_with = "input")]
    pub cimg: Option<PathBuf>,
    /// ... or encode it from a CSV record.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Image index in the CIMG file, or record id (data row) in the CSV.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, value_parser = parse_schema, default_value = "std")]
    pub schema: SchemaKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    /// Template molecules with coin-flip labels.
    Random,
    /// Label 1 iff the molecule carries a carboxylic acid.
    Acid,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "random")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of acid-free molecules whose lead substituent mimics the acid shape.
    #[arg(long, default_value_t = 0.5)]
    pub isostere_rate: f64,
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainOpts {
    fn train_config(&self, seed: u64, schema: SchemaKind) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            batch_size: self.batch,
            augment: !self.no_rotate,
            seed,
            learning_rate: self.learning_rate,
            standardize: if self.standardize || self.no_standardize {
                self.standardize
            } else {
                schema.is_engineered()
            },
            ..TrainConfig::default()
        }
    }

    fn policy(&self) -> OversamplePolicy {
        match self.oversample_policy {
            PolicyArg::Total => OversamplePolicy::TotalCopies,
            PolicyArg::Appended => OversamplePolicy::AppendedCopies,
        }
    }
}

/// Experiment config from command-line pieces.
#[allow(clippy::too_many_arguments)]
fn build_config(
    input: &Path,
    label_mode: LabelMode,
    encode: &EncodeOpts,
    split: &SplitOpts,
    split_file: Option<PathBuf>,
    train: &TrainOpts,
    seed: u64,
    folds: Option<Vec<usize>>,
) -> Result<ExperimentConfig, CliError> {
    let truth_task = match &encode.truth_task {
        Some(name) => task_index(&load_dataset(input, label_mode)?, name)?,
        None => 0,
    };
    Ok(ExperimentConfig {
        input: input.to_path_buf(),
        label_mode,
        encode: encode.config(seed, truth_task),
        split: SplitParams {
            test_fraction: split.test_fraction,
            folds: split.folds,
            seed,
            stratify_task: split.stratify.clone(),
        },
        split_file,
        arch: train.arch.clone(),
        residual_scale: train.residual_scale,
        init_seed: seed,
        train: train.train_config(seed, encode.schema),
        oversample_task: train.oversample_task.clone(),
        oversample_policy: train.policy(),
        folds,
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode(a) => encode(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Controls(a) => controls(a),
        Command::Ablation(a) => ablation(a),
        Command::Preview(a) => preview(a),
        Command::Synth(a) => synth(a),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::Data)
}

fn encode(a: EncodeArgs) -> Result<(), CliError> {
    let mode = a.data.label_mode.into();
    let dataset = load_dataset(&a.data.input, mode)?;
    let truth_task = a.encode.truth_task.as_deref().map(|n| task_index(&dataset, n)).transpose()?;
    let cfg = a.encode.config(a.seed, truth_task.unwrap_or(0));
    let set = encode_dataset(&dataset, cfg.clone());
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_tensor_file(&set.images, a.out.join("images.cimg")).map_err(|e| CliError::Data(e.into()))?;

    let mut ids = csv_writer(&a.out.join("ids.csv"))?;
    ids.write_record(["index", "record_id", "smiles"]).context("ids.csv")?;
    for (i, r) in set.records.iter().enumerate() {
        let smiles = &dataset.record(r.record_id).expect("encoded from the dataset").smiles;
        ids.write_record([i.to_string(), r.record_id.to_string(), smiles.clone()])
            .context("ids.csv")?;
    }
    ids.flush()?;

    let mut skipped = csv_writer(&a.out.join("skipped.csv"))?;
    skipped
        .write_record(["record_id", "smiles", "stage", "reason"])
        .context("skipped.csv")?;
    for s in &set.skipped {
        skipped
            .write_record([s.record_id.to_string(), s.smiles.clone(), s.reason.stage().into(), s.reason.to_string()])
            .context("skipped.csv")?;
    }
    skipped.flush()?;

    #[derive(serde::Serialize)]
    struct Echo<'a> {
        input: &'a Path,
        label_mode: LabelMode,
        encode: &'a EncodeConfig,
    }
    write_json(
        &a.out.join("config.json"),
        &Echo {
            input: &a.data.input,
            label_mode: mode,
            encode: &cfg,
        },
    )?;
    let (h, w, c) = (80, 80, cfg.schema.channels());
    println!(
        "encoded {} of {} records as {} ({}×{}×{}); {} skipped",
        set.images.len(),
        dataset.records.len(),
        cfg.schema,
        h,
        w,
        c,
        set.skipped.len()
    );
    Ok(())
}

fn split(a: SplitArgs) -> Result<(), CliError> {
    let dataset = load_dataset(&a.data.input, a.data.label_mode.into())?;
    let params = SplitParams {
        test_fraction: a.split.test_fraction,
        folds: a.split.folds,
        seed: a.seed,
        stratify_task: a.split.stratify.clone(),
    };
    let split = split_dataset(&dataset, &params)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&a.out, split.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "split {} records: {} test, {} folds",
        dataset.records.len(),
        split.test_ids.len(),
        split.folds.len()
    );
    Ok(())
}

fn metric_name(m: MetricKind) -> &'static str {
    match m {
        MetricKind::Auc => "auc",
        MetricKind::Rmse => "rmse",
    }
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(path) => read_config(path)?,
        None => build_config(
            a.input.as_deref().expect("clap requires --input without --config"),
            a.label_mode.into(),
            &a.encode,
            &a.split,
            a.split_file.clone(),
            &a.train,
            a.seed,
            a.fold.map(|f| vec![f]),
        )?,
    };
    let report = cfg.run(Some(&a.out))?;
    let name = metric_name(report.metric);
    for f in &report.folds {
        println!(
            "fold {}: best epoch {} of {}, validation loss {:.5}, validation {name} {}",
            f.fold,
            f.best_epoch,
            f.epochs_run,
            f.val_loss,
            fmt_metric(f.val_metric)
        );
    }
    println!("mean validation {name}: {}", fmt_metric(report.mean_val_metric));
    println!("test {name} (fold {} model): {}", report.best_fold, fmt_metric(report.test_metric));
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    if let Some(run) = &a.run {
        return evaluate_run(run);
    }
    let (Some(model_path), Some(input)) = (&a.model, &a.input) else {
        return Err(CliError::Usage("pass --run, or --model with --input".into()));
    };
    let mut model = load_model(model_path).map_err(|e| CliError::Data(e.into()))?;
    let dataset = load_dataset(input, LabelMode::Auto)?;
    let mut enc = EncodeConfig::new(a.schema);
    enc.seed = a.seed;
    let set = encode_dataset(&dataset, enc);
    let ids = set.ids();
    let (loss, metric) = model.evaluate(&set, &ids, a.batch).map_err(train_error)?;
    let name = if head_for(&dataset)? == chemimg_nn::Head::Sigmoid { "auc" } else { "rmse" };
    println!("{} records: loss {loss:.5}, {name} {}", ids.len(), fmt_metric(metric));
    Ok(())
}

/// Re-score every fold model of a run directory on its validation fold, then
/// the best one on the test set.
fn evaluate_run(run: &Path) -> Result<(), CliError> {
    let cfg = read_config(&run.join("config.json"))?;
    let split = read_split(&run.join("split.json"))?;
    let dataset = load_dataset(&cfg.input, cfg.label_mode)?;
    let set = encode_dataset(&dataset, cfg.encode.clone());
    let name = metric_name(if head_for(&dataset)? == chemimg_nn::Head::Sigmoid {
        MetricKind::Auc
    } else {
        MetricKind::Rmse
    });
    let usable = |ids: &[usize]| ids.iter().copied().filter(|&i| set.contains(i)).collect::<Vec<_>>();
    let mut scored: Vec<(usize, Option<f64>, Model)> = Vec::new();
    for (k, fold) in split.folds.iter().enumerate() {
        let path = run.join(format!("fold_{k}")).join("model.cmdl");
        if !path.exists() {
            continue;
        }
        let mut model = load_model(&path).map_err(|e| CliError::Data(e.into()))?;
        let (_, metric) = model
            .evaluate(&set, &usable(&fold.validation_ids), cfg.train.batch_size)
            .map_err(train_error)?;
        println!("fold {k}: validation {name} {}", fmt_metric(metric));
        scored.push((k, metric, model));
    }
    if scored.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!("no fold models under {}", run.display())));
    }
    let values: Vec<f64> = scored.iter().filter_map(|s| s.1).collect();
    let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    println!("mean validation {name}: {}", fmt_metric(mean));
    let better = |a: f64, b: f64| if name == "auc" { a > b } else { a < b };
    let mut best = 0;
    for (i, s) in scored.iter().enumerate() {
        if let (Some(m), Some(b)) = (s.1, scored[best].1) {
            if better(m, b) {
                best = i;
            }
        } else if scored[best].1.is_none() && s.1.is_some() {
            best = i;
        }
    }
    let test_ids = usable(&split.test_ids);
    if test_ids.is_empty() {
        println!("test {name}: n/a (empty test set)");
    } else {
        let (k, _, model) = &mut scored[best];
        let (_, metric) = model
            .evaluate(&set, &test_ids, cfg.train.batch_size)
            .map_err(train_error)?;
        println!("test {name} (fold {k} model): {}", fmt_metric(metric));
    }
    Ok(())
}

fn base_config(data: &DataOpts, split: &SplitOpts, train: &TrainOpts, noise_density: f64) -> ExperimentConfig {
    let mut encode = EncodeConfig::new(SchemaKind::Std);
    encode.noise_density = noise_density;
    ExperimentConfig {
        input: data.input.clone(),
        label_mode: data.label_mode.into(),
        encode,
        split: SplitParams {
            test_fraction: split.test_fraction,
            folds: split.folds,
            seed: 0,
            stratify_task: split.stratify.clone(),
        },
        split_file: None,
        arch: train.arch.clone(),
        residual_scale: train.residual_scale,
        init_seed: 0,
        train: train.train_config(0, SchemaKind::Std),
        oversample_task: train.oversample_task.clone(),
        oversample_policy: train.policy(),
        folds: None,
    }
}

fn controls(a: ControlsArgs) -> Result<(), CliError> {
    let base = base_config(&a.data, &a.split, &a.train, a.noise_density);
    let report = run_controls(&base, &a.seeds, a.shuffle_truth_labels, a.out.as_deref())?;
    let verdict = |p: bool| if p { "PASS" } else { "FAIL" };
    println!(
        "truth: validation auc {} (need ≥ {TRUTH_MIN_AUC}) {}",
        fmt_metric(report.truth.val_auc[0]),
        verdict(report.truth.pass)
    );
    let aucs: Vec<String> = report.noise.val_auc.iter().map(|v| fmt_metric(*v)).collect();
    println!(
        "noise: validation auc [{}] (need all in [{}, {}]) {}",
        aucs.join(", "),
        NOISE_AUC_BAND.0,
        NOISE_AUC_BAND.1,
        verdict(report.noise.pass)
    );
    Ok(())
}

fn ablation(a: AblationArgs) -> Result<(), CliError> {
    let mut base = base_config(&a.data, &a.split, &a.train, DEFAULT_NOISE_DENSITY);
    base.folds = a.fold.map(|f| vec![f]);
    let report = run_ablation(&base, &a.schemas, &a.seeds, a.out.as_deref())?;
    print!("{:<10}", "schema");
    for s in &a.seeds {
        print!(" seed {s:<5}");
    }
    println!(" mean");
    for &schema in &a.schemas {
        print!("{:<10}", schema.name());
        let vals: Vec<f64> = a.seeds.iter().filter_map(|&s| report.auc(schema, s)).collect();
        for &s in &a.seeds {
            print!(" {:<10}", fmt_metric(report.auc(schema, s)));
        }
        let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        println!(" {}", fmt_metric(mean));
    }
    Ok(())
}

fn preview(a: PreviewArgs) -> Result<(), CliError> {
    let img = match (&a.cimg, &a.input) {
        (Some(path), None) => {
            let mut images = read_tensor_file(path).map_err(|e| CliError::Data(e.into()))?;
            if a.index >= images.len() {
                return Err(CliError::Data(anyhow::anyhow!(
                    "index {} out of range ({} images)",
                    a.index,
                    images.len()
                )));
            }
            images.swap_remove(a.index)
        }
        (None, Some(input)) => {
            let dataset = load_dataset(input, LabelMode::Auto)?;
            let record = dataset
                .record(a.index)
                .ok_or_else(|| CliError::Data(anyhow::anyhow!("no labeled record with id {}", a.index)))?;
            let mut enc = EncodeConfig::new(a.schema);
            enc.seed = a.seed;
            let encoder = chemimg::encode::Encoder::new(enc, chemimg::percept::PeoeParams::default());
            let prepared = encoder
                .prepare(record)
                .map_err(|e| CliError::Data(anyhow::anyhow!("record {}: {e}", a.index)))?;
            encoder.render(&prepared, None).map_err(|e| CliError::Data(e.into()))?
        }
        _ => return Err(CliError::Usage("pass exactly one of --cimg or --input".into())),
    };
    if a.channel >= img.channels {
        return Err(CliError::Usage(format!("channel {} of a {}-channel image", a.channel, img.channels)));
    }
    export_png_preview(&img, &a.out, a.channel).map_err(|e| CliError::Data(e.into()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.isostere_rate) {
        return Err(CliError::Usage(format!("isostere rate {} outside [0, 1]", a.isostere_rate)));
    }
    let rows: Vec<(String, bool)> = match a.kind {
        SynthKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0x1abe1);
            random_molecules(a.n, a.seed)
                .into_iter()
                .map(|s| (s, rng.gen_bool(0.5)))
                .collect()
        }
        SynthKind::Acid => functional_group_task(a.n, a.isostere_rate, a.seed),
    };
    let mut w = csv_writer(&a.out)?;
    w.write_record(["smiles", "label"]).context("writing synthetic CSV")?;
    for (s, l) in &rows {
        w.write_record([s.as_str(), if *l { "1" } else { "0" }])
            .context("writing synthetic CSV")?;
    }
    w.flush()?;
    let mut stdout = std::io::stdout();
    writeln!(stdout, "wrote {} molecules to {}", rows.len(), a.out.display())?;
    Ok(())
}

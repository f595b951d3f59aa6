//! Replayable experiments: encode a CSV, split it, train every requested
//! fold and score the best model on the test set.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chemimg::dataset::{
    load_csv, make_split, make_split_stratified, oversample_minority, Dataset, DatasetError, DatasetSplit, LabelMode,
    OversamplePolicy, TaskKind,
};
use chemimg::encode::{EncodeConfig, EncodedSet, Encoder};
use chemimg::metrics::MetricKind;
use chemimg::percept::PeoeParams;
use chemimg_nn::{save_model, train, write_history_csv, Arch, Head, Model, NetworkConfig, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub test_fraction: f64,
    pub folds: usize,
    pub seed: u64,
    /// Deal folds class by class on this label column.
    pub stratify_task: Option<String>,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            test_fraction: 0.1,
            folds: 5,
            seed: 0,
            stratify_task: None,
        }
    }
}

/// Everything a training run depends on. Written as `config.json` next to
/// the outputs; feeding it back reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub input: PathBuf,
    pub label_mode: LabelMode,
    pub encode: EncodeConfig,
    pub split: SplitParams,
    /// Use this manifest instead of splitting with `split`.
    pub split_file: Option<PathBuf>,
    pub arch: String,
    pub residual_scale: f64,
    /// Network initialization seed.
    pub init_seed: u64,
    pub train: TrainConfig,
    pub oversample_task: Option<String>,
    pub oversample_policy: OversamplePolicy,
    /// Folds to train; all when None.
    pub folds: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub val_loss: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metric: MetricKind,
    pub folds: Vec<FoldReport>,
    /// Mean of the per-fold validation metrics that could be computed.
    pub mean_val_metric: Option<f64>,
    pub best_fold: usize,
    pub test_size: usize,
    pub test_metric: Option<f64>,
    pub skipped_records: usize,
}

pub fn task_index(dataset: &Dataset, name: &str) -> Result<usize, CliError> {
    dataset
        .tasks
        .iter()
        .position(|t| t == name)
        .ok_or_else(|| CliError::Data(anyhow::anyhow!("no label column {name:?} (have {:?})", dataset.tasks)))
}

/// Sigmoid outputs when every task is binary, a linear output otherwise.
pub fn head_for(dataset: &Dataset) -> Result<Head, CliError> {
    if dataset.tasks.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!("the CSV has no label columns")));
    }
    if dataset.task_kinds.iter().all(|k| *k == TaskKind::Classification) {
        Ok(Head::Sigmoid)
    } else if dataset.task_kinds.iter().all(|k| *k == TaskKind::Regression) {
        Ok(Head::Linear)
    } else {
        Err(CliError::Data(anyhow::anyhow!("mixed classification and regression columns")))
    }
}

/// Encode every record, in parallel but in dataset order.
pub fn encode_dataset(dataset: &Dataset, config: EncodeConfig) -> EncodedSet {
    let encoder = Encoder::new(config, PeoeParams::default());
    let prepared = dataset.records.par_iter().map(|r| encoder.prepare(r)).collect();
    EncodedSet::assemble(encoder, dataset, prepared)
}

pub fn split_dataset(dataset: &Dataset, params: &SplitParams) -> Result<DatasetSplit, CliError> {
    let ids = dataset.ids();
    let split = match &params.stratify_task {
        None => make_split(&ids, params.test_fraction, params.folds, params.seed),
        Some(name) => {
            let t = task_index(dataset, name)?;
            let labels: Vec<Option<f64>> = dataset.records.iter().map(|r| r.labels[t]).collect();
            make_split_stratified(&ids, &labels, params.test_fraction, params.folds, params.seed)
        }
    };
    split.map_err(|e| CliError::Data(e.into()))
}

pub fn read_split(path: &Path) -> Result<DatasetSplit, CliError> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    DatasetSplit::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(CliError::Data)
}

pub fn load_dataset(path: &Path, mode: LabelMode) -> Result<Dataset, CliError> {
    load_csv(path, mode)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(CliError::Data)
}

/// Best fold by validation metric (AUC up, RMSE down), ties and missing
/// metrics broken by validation loss.
fn best_fold(metric: MetricKind, folds: &[FoldReport]) -> usize {
    let key = |f: &FoldReport| {
        let m = f.val_metric.map(|m| if metric == MetricKind::Auc { -m } else { m });
        (m.unwrap_or(f64::INFINITY), f.val_loss)
    };
    folds
        .iter()
        .min_by(|a, b| key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal))
        .map_or(0, |f| f.fold)
}

impl ExperimentConfig {
    pub fn network_config(&self, channels: usize, tasks: usize, head: Head) -> Result<NetworkConfig, CliError> {
        let arch: Arch = self.arch.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
        let mut cfg = NetworkConfig::new(arch, channels, tasks, head);
        cfg.residual_scale = self.residual_scale;
        cfg.seed = self.init_seed;
        Ok(cfg)
    }

    /// Run on a freshly loaded dataset.
    pub fn run(&self, out: Option<&Path>) -> Result<ExperimentReport, CliError> {
        let dataset = load_dataset(&self.input, self.label_mode)?;
        let encoded = encode_dataset(&dataset, self.encode.clone());
        self.run_encoded(&dataset, &encoded, out)
    }

    /// Train the requested folds on an already encoded dataset. With `out`,
    /// writes `config.json`, `split.json`, `metrics.json` and per fold
    /// `fold_<k>/history.csv` and `fold_<k>/model.cmdl`.
    pub fn run_encoded(
        &self,
        dataset: &Dataset,
        encoded: &EncodedSet,
        out: Option<&Path>,
    ) -> Result<ExperimentReport, CliError> {
        let head = head_for(dataset)?;
        let metric = if head == Head::Sigmoid { MetricKind::Auc } else { MetricKind::Rmse };
        let split = match &self.split_file {
            Some(p) => read_split(p)?,
            None => split_dataset(dataset, &self.split)?,
        };
        let oversample = self.oversample_task.as_deref().map(|n| task_index(dataset, n)).transpose()?;
        if let Some(dir) = out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_json(&dir.join("config.json"), self)?;
            fs::write(dir.join("split.json"), split.to_json())?;
        }
        let net_cfg = self.network_config(encoded.encoder.channels(), dataset.tasks.len(), head)?;
        let usable = |ids: &[usize]| ids.iter().copied().filter(|&i| encoded.contains(i)).collect::<Vec<_>>();
        let folds: Vec<usize> = self.folds.clone().unwrap_or_else(|| (0..split.folds.len()).collect());
        let mut reports = Vec::new();
        let mut models = Vec::new();
        for &k in &folds {
            let fold = split
                .folds
                .get(k)
                .ok_or_else(|| CliError::Usage(format!("fold {k} not in a {}-fold split", split.folds.len())))?;
            let mut train_ids = usable(&fold.train_ids);
            let val_ids = usable(&fold.validation_ids);
            if let Some(t) = oversample {
                train_ids = oversample_minority(
                    &train_ids,
                    |id| encoded.get(id).and_then(|r| r.labels[t]),
                    t,
                    self.oversample_policy,
                )
                .map_err(|e| CliError::Data(e.into()))?;
            }
            if train_ids.is_empty() || val_ids.is_empty() {
                return Err(CliError::Data(
                    DatasetError::TooFewRecords {
                        needed: 2,
                        have: train_ids.len() + val_ids.len(),
                    }
                    .into(),
                ));
            }
            log::info!("fold {k}: {} train, {} validation", train_ids.len(), val_ids.len());
            let mut model = Model::new(&net_cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            let outcome = train(&mut model, encoded, &train_ids, &val_ids, &self.train).map_err(crate::train_error)?;
            let best = outcome.best().clone();
            if let Some(dir) = out {
                let fold_dir = dir.join(format!("fold_{k}"));
                fs::create_dir_all(&fold_dir)?;
                write_history_csv(&outcome.history, fs::File::create(fold_dir.join("history.csv"))?)?;
                save_model(&model, fold_dir.join("model.cmdl")).map_err(|e| CliError::Internal(e.into()))?;
            }
            reports.push(FoldReport {
                fold: k,
                train_size: train_ids.len(),
                validation_size: val_ids.len(),
                epochs_run: outcome.history.len(),
                best_epoch: outcome.best_epoch,
                val_loss: best.val_loss,
                val_metric: best.val_metric,
            });
            models.push(model);
        }
        let scored: Vec<f64> = reports.iter().filter_map(|r| r.val_metric).collect();
        let mean_val_metric = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
        let best = best_fold(metric, &reports);
        let test_ids = usable(&split.test_ids);
        let test_metric = if test_ids.is_empty() {
            None
        } else {
            let i = reports.iter().position(|r| r.fold == best).unwrap_or(0);
            let (_, m) = models[i]
                .evaluate(encoded, &test_ids, self.train.batch_size)
                .map_err(crate::train_error)?;
            m
        };
        let report = ExperimentReport {
            metric,
            folds: reports,
            mean_val_metric,
            best_fold: best,
            test_size: test_ids.len(),
            test_metric,
            skipped_records: encoded.skipped.len(),
        };
        if let Some(dir) = out {
            write_json(&dir.join("metrics.json"), &report)?;
        }
        Ok(report)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.into()))?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(CliError::Data)
}

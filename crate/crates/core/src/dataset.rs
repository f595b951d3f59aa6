//! Labeled SMILES tables, train/validation/test splitting with k-fold cross
//! validation, minority oversampling, and epoch batch streams.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::ChemImage;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("CSV has no 'smiles' column (found: {0:?})")]
    MissingSmilesColumn(Vec<String>),
    #[error("row {row}, column '{column}': bad label '{value}'")]
    BadLabel { row: usize, column: String, value: String },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("need at least {needed} records, have {have}")]
    TooFewRecords { needed: usize, have: usize },
    #[error("task {task} has a single class in the training ids")]
    SingleClass { task: usize },
    #[error("invalid split parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub smiles: String,
    /// One entry per task; None marks a missing label.
    pub labels: Vec<Option<f64>>,
    pub record_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// How label columns are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// A column is a classification task when every present value is 0 or 1.
    #[default]
    Auto,
    /// Every column must hold 0/1 labels.
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub tasks: Vec<String>,
    pub task_kinds: Vec<TaskKind>,
    pub records: Vec<LabeledRecord>,
    /// Row indices that carried no label at all and were left out.
    pub unlabeled_rows: Vec<usize>,
}

impl Dataset {
    pub fn ids(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.record_id).collect()
    }

    pub fn record(&self, id: usize) -> Option<&LabeledRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.record_id)
            .ok()
            .map(|i| &self.records[i])
    }
}

pub fn load_csv(path: impl AsRef<Path>, mode: LabelMode) -> Result<Dataset, DatasetError> {
    read_csv(std::fs::File::open(path)?, mode)
}

/// Parse CSV text: a header row with a `smiles` column; every other column is a task.
pub fn read_csv(reader: impl Read, mode: LabelMode) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let smiles_col = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("smiles"))
        .ok_or_else(|| DatasetError::MissingSmilesColumn(headers.clone()))?;
    let task_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != smiles_col).collect();
    let tasks: Vec<String> = task_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let smiles = rec.get(smiles_col).unwrap_or("").to_string();
        let mut labels = Vec::with_capacity(task_cols.len());
        for &c in &task_cols {
            let cell = rec.get(c).unwrap_or("");
            if cell.is_empty() {
                labels.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DatasetError::BadLabel {
                row,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::BadLabel {
                    row,
                    column: headers[c].clone(),
                    value: cell.to_string(),
                });
            }
            labels.push(Some(v));
        }
        rows.push((row, smiles, labels));
    }

    let binary = |t: usize| rows.iter().all(|(_, _, l)| l[t].is_none_or(|v| v == 0.0 || v == 1.0));
    let mut task_kinds = Vec::with_capacity(tasks.len());
    for t in 0..tasks.len() {
        let kind = match mode {
            LabelMode::Regression => TaskKind::Regression,
            LabelMode::Auto if binary(t) => TaskKind::Classification,
            LabelMode::Auto => TaskKind::Regression,
            LabelMode::Classification => {
                if let Some((row, _, l)) = rows
                    .iter()
                    .find(|(_, _, l)| l[t].is_some_and(|v| v != 0.0 && v != 1.0))
                {
                    return Err(DatasetError::BadLabel {
                        row: *row,
                        column: tasks[t].clone(),
                        value: l[t].unwrap().to_string(),
                    });
                }
                TaskKind::Classification
            }
        };
        task_kinds.push(kind);
    }

    let mut records = Vec::new();
    let mut unlabeled_rows = Vec::new();
    for (row, smiles, labels) in rows {
        if labels.iter().all(Option::is_none) {
            unlabeled_rows.push(row);
        } else {
            records.push(LabeledRecord {
                smiles,
                labels,
                record_id: row,
            });
        }
    }
    Ok(Dataset {
        tasks,
        task_kinds,
        records,
        unlabeled_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_ids: Vec<usize>,
    pub validation_ids: Vec<usize>,
}

/// Test ids plus k cross-validation folds; the JSON form is the split manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub test_ids: Vec<usize>,
    pub folds: Vec<Fold>,
}

impl DatasetSplit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn from_json(text: &str) -> Result<DatasetSplit, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Ids that are in more than one of train/validation/test for some fold.
    pub fn leaks(&self) -> Vec<usize> {
        let test: BTreeSet<usize> = self.test_ids.iter().copied().collect();
        let mut out = BTreeSet::new();
        for f in &self.folds {
            let train: BTreeSet<usize> = f.train_ids.iter().copied().collect();
            let val: BTreeSet<usize> = f.validation_ids.iter().copied().collect();
            out.extend(train.intersection(&val));
            out.extend(train.intersection(&test));
            out.extend(val.intersection(&test));
        }
        out.into_iter().collect()
    }
}

/// Seeded shuffle; the first round(test_fraction·N) ids form the test set and
/// the rest is cut into k contiguous near-equal folds.
pub fn make_split(ids: &[usize], test_fraction: f64, k: usize, seed: u64) -> Result<DatasetSplit, DatasetError> {
    split_impl(ids, None, test_fraction, k, seed)
}

/// As [`make_split`], but fold membership is dealt class by class so each fold
/// gets a near-equal share of every label value.
pub fn make_split_stratified(
    ids: &[usize],
    labels: &[Option<f64>],
    test_fraction: f64,
    k: usize,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    if labels.len() != ids.len() {
        return Err(DatasetError::InvalidParameter(format!(
            "{} labels for {} ids",
            labels.len(),
            ids.len()
        )));
    }
    split_impl(ids, Some(labels), test_fraction, k, seed)
}

fn split_impl(
    ids: &[usize],
    labels: Option<&[Option<f64>]>,
    test_fraction: f64,
    k: usize,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidParameter(format!("k = {k}, need k ≥ 2")));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(DatasetError::InvalidParameter(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let n = ids.len();
    if n < k + 1 {
        return Err(DatasetError::TooFewRecords { needed: k + 1, have: n });
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n - n_test < k {
        return Err(DatasetError::TooFewRecords {
            needed: n_test + k,
            have: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let test_ids: Vec<usize> = order[..n_test].iter().map(|&i| ids[i]).collect();
    let rest = &order[n_test..];

    let fold_members: Vec<Vec<usize>> = match labels {
        None => {
            let (base, extra) = (rest.len() / k, rest.len() % k);
            let mut start = 0;
            (0..k)
                .map(|f| {
                    let len = base + usize::from(f < extra);
                    let chunk = rest[start..start + len].to_vec();
                    start += len;
                    chunk
                })
                .collect()
        }
        Some(labels) => {
            // group by label (missing last), keep shuffled order inside groups, deal round-robin
            let mut sorted = rest.to_vec();
            let key = |i: usize| labels[i].map_or((1, 0u64), |v| (0, v.to_bits()));
            sorted.sort_by_key(|&i| key(i));
            let mut folds = vec![Vec::new(); k];
            for (pos, &i) in sorted.iter().enumerate() {
                folds[pos % k].push(i);
            }
            folds
        }
    };
    let folds = (0..k)
        .map(|f| Fold {
            validation_ids: fold_members[f].iter().map(|&i| ids[i]).collect(),
            train_ids: (0..k)
                .filter(|&g| g != f)
                .flat_map(|g| fold_members[g].iter().map(|&i| ids[i]))
                .collect(),
        })
        .collect();
    Ok(DatasetSplit { seed, test_ids, folds })
}

/// How many copies of each minority record the oversampled train list holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OversamplePolicy {
    /// r = floor(majority/minority) copies in total.
    #[default]
    TotalCopies,
    /// r copies appended on top of the original (r + 1 in total).
    AppendedCopies,
}

/// Append minority-class copies for one binary task. Ids whose label for
/// `task` is missing are kept once and not counted.
pub fn oversample_minority(
    train_ids: &[usize],
    label_of: impl Fn(usize) -> Option<f64>,
    task: usize,
    policy: OversamplePolicy,
) -> Result<Vec<usize>, DatasetError> {
    let positives: Vec<usize> = train_ids.iter().copied().filter(|&i| label_of(i) == Some(1.0)).collect();
    let negatives: Vec<usize> = train_ids.iter().copied().filter(|&i| label_of(i) == Some(0.0)).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(DatasetError::SingleClass { task });
    }
    let (minority, majority) = if positives.len() < negatives.len() {
        (positives, negatives.len())
    } else {
        (negatives, positives.len())
    };
    let r = majority / minority.len();
    let extra = match policy {
        OversamplePolicy::TotalCopies => r - 1,
        OversamplePolicy::AppendedCopies => r,
    };
    let mut out = train_ids.to_vec();
    for _ in 0..extra {
        out.extend_from_slice(&minority);
    }
    Ok(out)
}

/// Anything that can hand out images and labels by record id.
pub trait ImageSource {
    /// (height, width, channels) of every rendered image.
    fn shape(&self) -> (usize, usize, usize);
    fn tasks(&self) -> usize;
    /// Image for `id`, optionally rotated by the given angle in degrees.
    fn render(&self, id: usize, rotation_deg: Option<f64>) -> ChemImage;
    fn labels(&self, id: usize) -> Vec<Option<f64>>;
}

/// One mini-batch: inputs in (N, C, H, W) order, labels and mask in (N, tasks).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub inputs: Vec<f32>,
    pub labels: Vec<f32>,
    pub mask: Vec<f32>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub tasks: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn assemble(source: &impl ImageSource, ids: &[usize], angles: Option<&[f64]>) -> Batch {
    let (h, w, c) = source.shape();
    let tasks = source.tasks();
    let mut inputs = Vec::with_capacity(ids.len() * h * w * c);
    let mut labels = Vec::with_capacity(ids.len() * tasks);
    let mut mask = Vec::with_capacity(ids.len() * tasks);
    for (k, &id) in ids.iter().enumerate() {
        let img = source.render(id, angles.map(|a| a[k]));
        debug_assert_eq!(img.shape(), (h, w, c));
        inputs.extend(img.to_chw());
        for l in source.labels(id) {
            labels.push(l.unwrap_or(0.0) as f32);
            mask.push(if l.is_some() { 1.0 } else { 0.0 });
        }
    }
    Batch {
        ids: ids.to_vec(),
        inputs,
        labels,
        mask,
        channels: c,
        height: h,
        width: w,
        tasks,
    }
}

/// Training batches for one epoch: a seeded shuffle of `train_ids`, and with
/// `augment` a rotation angle drawn from Uniform[0°, 180°) per example. The
/// final short batch is kept.
pub fn epoch_batches<'a, S: ImageSource>(
    train_ids: &[usize],
    source: &'a S,
    batch_size: usize,
    augment: bool,
    seed: u64,
    epoch: u64,
) -> impl Iterator<Item = Batch> + 'a {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order = train_ids.to_vec();
    order.shuffle(&mut rng);
    let angles: Option<Vec<f64>> = augment.then(|| order.iter().map(|_| rng.gen_range(0.0..180.0)).collect());
    let batch_size = batch_size.max(1);
    let starts: Vec<usize> = (0..order.len()).step_by(batch_size).collect();
    starts.into_iter().map(move |s| {
        let e = (s + batch_size).min(order.len());
        assemble(source, &order[s..e], angles.as_ref().map(|a| &a[s..e]))
    })
}

/// Unshuffled, unaugmented batches for evaluation.
pub fn eval_batches<'a, S: ImageSource>(ids: &'a [usize], source: &'a S, batch_size: usize) -> impl Iterator<Item = Batch> + 'a {
    ids.chunks(batch_size.max(1)).map(move |chunk| assemble(source, chunk, None))
}

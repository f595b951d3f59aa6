//! Control experiments (Truth, Noise) and schema ablations, all driven from
//! one base experiment config.

use std::path::Path;

use chemimg::dataset::{Dataset, DatasetError};
use chemimg::encode::EncodedSet;
use chemimg::raster::SchemaKind;
use chemimg_nn::Head;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::experiment::{encode_dataset, head_for, load_dataset, write_json, ExperimentConfig, ExperimentReport};
use crate::CliError;

/// Validation AUC a Truth run must reach.
pub const TRUTH_MIN_AUC: f64 = 0.99;
/// Band every Noise run must land in.
pub const NOISE_AUC_BAND: (f64, f64) = (0.40, 0.60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlOutcome {
    pub schema: SchemaKind,
    pub seeds: Vec<u64>,
    /// Mean validation AUC over the trained folds, one per seed.
    pub val_auc: Vec<Option<f64>>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlsReport {
    pub truth: ControlOutcome,
    pub noise: ControlOutcome,
    pub truth_labels_shuffled: bool,
}

/// Copy of `base` with every seed set to `seed` and the given schema.
pub fn variant(base: &ExperimentConfig, schema: SchemaKind, seed: u64) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.encode.schema = schema;
    cfg.encode.seed = seed;
    cfg.split.seed = seed;
    cfg.init_seed = seed;
    cfg.train.seed = seed;
    cfg
}

fn require_binary(dataset: &Dataset, base: &ExperimentConfig) -> Result<(), CliError> {
    let needed = base.split.folds + 1;
    if dataset.records.len() < needed {
        return Err(CliError::Data(
            DatasetError::TooFewRecords {
                needed,
                have: dataset.records.len(),
            }
            .into(),
        ));
    }
    if head_for(dataset)? != Head::Sigmoid {
        return Err(CliError::Data(anyhow::anyhow!("controls need binary label columns")));
    }
    Ok(())
}

/// Truth images drawn from a seeded permutation of the truth-task labels,
/// while training still sees the real labels.
fn encode_truth_shuffled(dataset: &Dataset, cfg: &ExperimentConfig) -> EncodedSet {
    let t = cfg.encode.truth_task;
    let mut shuffled = dataset.clone();
    let mut column: Vec<Option<f64>> = dataset.records.iter().map(|r| r.labels[t]).collect();
    column.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.encode.seed ^ 0x5eed));
    for (r, v) in shuffled.records.iter_mut().zip(column) {
        r.labels[t] = v;
    }
    let mut encoded = encode_dataset(&shuffled, cfg.encode.clone());
    for r in encoded.records.iter_mut() {
        r.labels = dataset.record(r.record_id).expect("encoded ids come from the dataset").labels.clone();
    }
    encoded
}

fn run_variant(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    shuffle_truth: bool,
    out: Option<&Path>,
) -> Result<ExperimentReport, CliError> {
    let encoded = if shuffle_truth && cfg.encode.schema == SchemaKind::Truth {
        encode_truth_shuffled(dataset, cfg)
    } else {
        encode_dataset(dataset, cfg.encode.clone())
    };
    cfg.run_encoded(dataset, &encoded, out)
}

/// Truth on the first seed, Noise on every seed.
pub fn run_controls(
    base: &ExperimentConfig,
    seeds: &[u64],
    shuffle_truth: bool,
    out: Option<&Path>,
) -> Result<ControlsReport, CliError> {
    let seeds = if seeds.is_empty() { &[0][..] } else { seeds };
    let dataset = load_dataset(&base.input, base.label_mode)?;
    require_binary(&dataset, base)?;

    let truth_cfg = variant(base, SchemaKind::Truth, seeds[0]);
    let dir = out.map(|d| d.join(format!("truth_seed{}", seeds[0])));
    let truth_report = run_variant(&dataset, &truth_cfg, shuffle_truth, dir.as_deref())?;
    let truth_auc = truth_report.mean_val_metric;
    log::info!("truth control: mean validation AUC {truth_auc:?}");
    let truth = ControlOutcome {
        schema: SchemaKind::Truth,
        seeds: vec![seeds[0]],
        val_auc: vec![truth_auc],
        pass: truth_auc.is_some_and(|a| a >= TRUTH_MIN_AUC),
    };

    let mut noise_auc = Vec::new();
    for &s in seeds {
        let cfg = variant(base, SchemaKind::Noise, s);
        let dir = out.map(|d| d.join(format!("noise_seed{s}")));
        let r = run_variant(&dataset, &cfg, false, dir.as_deref())?;
        log::info!("noise control, seed {s}: mean validation AUC {:?}", r.mean_val_metric);
        noise_auc.push(r.mean_val_metric);
    }
    let (lo, hi) = NOISE_AUC_BAND;
    let noise = ControlOutcome {
        schema: SchemaKind::Noise,
        seeds: seeds.to_vec(),
        pass: noise_auc.iter().all(|a| a.is_some_and(|a| (lo..=hi).contains(&a))),
        val_auc: noise_auc,
    };
    let report = ControlsReport {
        truth,
        noise,
        truth_labels_shuffled: shuffle_truth,
    };
    if let Some(d) = out {
        write_json(&d.join("controls.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub schema: SchemaKind,
    pub seed: u64,
    pub mean_val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn auc(&self, schema: SchemaKind, seed: u64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.schema == schema && r.seed == seed)
            .and_then(|r| r.mean_val_auc)
    }

    /// Whether `auc(a) ≤ auc(b) + tolerance` on every seed.
    pub fn ordered(&self, a: SchemaKind, b: SchemaKind, tolerance: f64) -> bool {
        let seeds: Vec<u64> = self.rows.iter().filter(|r| r.schema == a).map(|r| r.seed).collect();
        !seeds.is_empty()
            && seeds.iter().all(|&s| match (self.auc(a, s), self.auc(b, s)) {
                (Some(x), Some(y)) => x <= y + tolerance,
                _ => false,
            })
    }
}

/// Train every schema on every seed with otherwise identical settings, so
/// splits, initial weights and batch order match across schemas.
pub fn run_ablation(
    base: &ExperimentConfig,
    schemas: &[SchemaKind],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<AblationReport, CliError> {
    let dataset = load_dataset(&base.input, base.label_mode)?;
    require_binary(&dataset, base)?;
    let mut rows = Vec::new();
    for &seed in seeds {
        for &schema in schemas {
            let cfg = variant(base, schema, seed);
            let dir = out.map(|d| d.join(format!("{}_seed{seed}", schema.name())));
            let r = run_variant(&dataset, &cfg, false, dir.as_deref())?;
            log::info!("{schema} seed {seed}: mean validation AUC {:?}", r.mean_val_metric);
            rows.push(AblationRow {
                schema,
                seed,
                mean_val_auc: r.mean_val_metric,
            });
        }
    }
    let report = AblationReport { rows };
    if let Some(d) = out {
        write_json(&d.join("ablation.json"), &report)?;
    }
    Ok(report)
}

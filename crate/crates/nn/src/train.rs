//! Training loop with early stopping, prediction and the history CSV.

use std::io::{self, Write};

use chemimg::dataset::{epoch_batches, eval_batches, Batch, ImageSource};
use chemimg::metrics::{EvalReport, MetricKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{masked_bce_with_logits, mse_loss, LossError, LossOutput};
use crate::network::{Head, Network, NetworkConfig};
use crate::optim::{RmsProp, DEFAULT_EPSILON, DEFAULT_LEARNING_RATE, DEFAULT_RHO};
use crate::tensor::Tensor;
use crate::NnError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("loss: {0}")]
    Loss(#[from] LossError),
    #[error("{0}")]
    InvalidSetup(String),
    #[error("loss became non-finite in epoch {0}")]
    NonFinite(usize),
}

/// Per-channel shift and scale fitted on training images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Channel mean and population std over every pixel of the unrotated
    /// images of `ids`. A constant channel keeps std 1.
    pub fn fit<S: ImageSource>(source: &S, ids: &[usize]) -> Standardizer {
        let (_, _, c) = source.shape();
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        let mut count = 0usize;
        for &id in ids {
            let img = source.render(id, None);
            for px in img.data.chunks_exact(c) {
                for (k, &v) in px.iter().enumerate() {
                    sum[k] += v as f64;
                    sq[k] += (v as f64).powi(2);
                }
            }
            count += img.height * img.width;
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n - m * m).max(0.0).sqrt();
                if sd > 1e-6 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    /// Normalize NCHW values in place.
    pub fn apply(&self, data: &mut [f32], plane: usize) {
        let c = self.mean.len();
        for (i, chunk) in data.chunks_exact_mut(plane).enumerate() {
            let k = i % c;
            let (m, s) = (self.mean[k] as f32, self.std[k] as f32);
            chunk.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
    }
}

/// A network plus the input transform it was trained with.
#[derive(Debug, Clone)]
pub struct Model {
    pub network: Network<f32>,
    pub standardizer: Option<Standardizer>,
}

impl Model {
    pub fn new(config: &NetworkConfig) -> Result<Model, NnError> {
        Ok(Model {
            network: Network::build(config)?,
            standardizer: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.network.config
    }

    fn input(&self, batch: &Batch) -> Result<Tensor<f32>, NnError> {
        let mut data = batch.inputs.clone();
        if let Some(s) = &self.standardizer {
            s.apply(&mut data, batch.height * batch.width);
        }
        Tensor::from_vec([batch.len(), batch.channels, batch.height, batch.width], data)
    }

    fn loss(&self, raw: &[f32], batch: &Batch) -> Result<LossOutput<f32>, LossError> {
        match self.config().head {
            Head::Sigmoid => masked_bce_with_logits(raw, &batch.labels, &batch.mask),
            Head::Linear => mse_loss(raw, &batch.labels, &batch.mask),
        }
    }

    /// Head outputs for `ids`, one row of `tasks` values per id.
    pub fn predict<S: ImageSource>(&mut self, source: &S, ids: &[usize], batch_size: usize) -> Result<Vec<Vec<f64>>, NnError> {
        let tasks = self.config().tasks;
        let mut out = Vec::with_capacity(ids.len());
        for batch in eval_batches(ids, source, batch_size) {
            let raw = self.network.forward(&self.input(&batch)?)?;
            out.extend(
                raw.data
                    .chunks_exact(tasks)
                    .map(|row| row.iter().map(|&v| self.network.activate(v) as f64).collect()),
            );
        }
        Ok(out)
    }

    /// Mean masked loss and task-mean metric over `ids`.
    pub fn evaluate<S: ImageSource>(
        &mut self,
        source: &S,
        ids: &[usize],
        batch_size: usize,
    ) -> Result<(f64, Option<f64>), TrainError> {
        let tasks = self.config().tasks;
        let (mut sum, mut count) = (0.0, 0usize);
        let mut preds = Vec::with_capacity(ids.len());
        let mut labels = Vec::with_capacity(ids.len());
        for batch in eval_batches(ids, source, batch_size) {
            let raw = self.network.forward(&self.input(&batch)?)?;
            match self.loss(&raw.data, &batch) {
                Ok(l) => {
                    sum += l.loss * l.count as f64;
                    count += l.count;
                }
                Err(LossError::AllMasked) => {}
                Err(e) => return Err(e.into()),
            }
            for (row, (y, m)) in raw
                .data
                .chunks_exact(tasks)
                .zip(batch.labels.chunks_exact(tasks).zip(batch.mask.chunks_exact(tasks)))
            {
                preds.push(row.iter().map(|&v| self.network.activate(v) as f64).collect());
                labels.push(y.iter().zip(m).map(|(&y, &m)| (m > 0.0).then_some(y as f64)).collect());
            }
        }
        if count == 0 {
            return Err(LossError::AllMasked.into());
        }
        let metric = match self.config().head {
            Head::Sigmoid => MetricKind::Auc,
            Head::Linear => MetricKind::Rmse,
        };
        Ok((sum / count as f64, EvalReport::evaluate(metric, &preds, &labels).mean))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    /// Random rotation per example and epoch.
    pub augment: bool,
    /// Seeds the shuffle and rotation angles.
    pub seed: u64,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Fit a per-channel standardizer on the training images first.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            patience: 25,
            batch_size: 32,
            augment: true,
            seed: 0,
            learning_rate: DEFAULT_LEARNING_RATE,
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights the model holds on return.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

/// Train `model` on `train_ids`, scoring `val_ids` after every epoch. The
/// weights with the lowest validation loss are restored before returning.
pub fn train<S: ImageSource>(
    model: &mut Model,
    source: &S,
    train_ids: &[usize],
    val_ids: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let net = model.config();
    if source.shape() != (net.input_height, net.input_width, net.input_channels) {
        return Err(TrainError::InvalidSetup(format!(
            "images are {:?} (h, w, c) but the network expects ({}, {}, {})",
            source.shape(),
            net.input_height,
            net.input_width,
            net.input_channels
        )));
    }
    if source.tasks() != net.tasks {
        return Err(TrainError::InvalidSetup(format!(
            "{} label columns for a {}-task network",
            source.tasks(),
            net.tasks
        )));
    }
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(TrainError::InvalidSetup("training and validation sets must be non-empty".into()));
    }
    if cfg.epochs == 0 || cfg.patience == 0 {
        return Err(TrainError::InvalidSetup("epochs and patience must be ≥ 1".into()));
    }
    if cfg.standardize && model.standardizer.is_none() {
        model.standardizer = Some(Standardizer::fit(source, train_ids));
    }
    let mut opt = RmsProp::new(cfg.learning_rate, cfg.rho, cfg.epsilon);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<Vec<f32>>)> = None;
    let mut wait = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let (mut sum, mut count) = (0.0, 0usize);
        for batch in epoch_batches(train_ids, source, cfg.batch_size, cfg.augment, cfg.seed, epoch as u64) {
            let x = model.input(&batch)?;
            model.network.zero_grad();
            let raw = model.network.forward(&x)?;
            let out = match model.loss(&raw.data, &batch) {
                Ok(out) => out,
                Err(LossError::AllMasked) => {
                    log::warn!("epoch {epoch}: batch with every label masked skipped");
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            if !out.loss.is_finite() {
                return Err(TrainError::NonFinite(epoch));
            }
            sum += out.loss * out.count as f64;
            count += out.count;
            model.network.backward(&Tensor::from_vec(raw.shape, out.grad)?)?;
            opt.step(&mut model.network.params_mut());
        }
        if count == 0 {
            return Err(LossError::AllMasked.into());
        }
        let (val_loss, val_metric) = model.evaluate(source, val_ids, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFinite(epoch));
        }
        let record = EpochRecord {
            epoch,
            train_loss: sum / count as f64,
            val_loss,
            val_metric,
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} metric {:?}",
            record.train_loss,
            val_loss,
            val_metric
        );
        history.push(record);
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, model.network.snapshot()));
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch ran");
    model.network.restore(&weights)?;
    Ok(TrainOutcome {
        history,
        best_epoch,
        stopped_early,
    })
}

/// Write `epoch,train_loss,val_loss,val_metric` rows. Floats use Rust's
/// shortest round-trip form, so identical runs give identical bytes.
pub fn write_history_csv(history: &[EpochRecord], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss,val_metric")?;
    for r in history {
        let metric = r.val_metric.map(|m| m.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, metric)?;
    }
    Ok(())
}

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Milestone, Network, OptimizerKind, OptimizerState, Targets};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub schedule: Vec<Milestone>,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

/// Loss plus accuracy (classification) on one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

impl EvalMetrics {
    /// Accuracy for classification, loss otherwise.
    pub fn metric(&self) -> f64 {
        self.accuracy.unwrap_or(self.loss)
    }

    /// Larger is better.
    pub fn score(&self) -> f64 {
        self.accuracy.unwrap_or(-self.loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based; 0 is the evaluation before any update.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_metric: f64,
    pub test_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    /// Wall time per epoch. Kept apart from the records, which are deterministic.
    pub seconds: Vec<f64>,
    /// [`Network::snapshot_id`] of the final parameters.
    pub snapshot: String,
}

/// Base rate divided by every milestone already reached at 0-based `epoch`.
pub fn lr_at(base: f64, schedule: &[Milestone], epoch: usize) -> f64 {
    schedule
        .iter()
        .filter(|m| epoch >= m.epoch)
        .fold(base, |lr, m| lr / m.divisor)
}

/// Eval-mode loss and accuracy over a whole dataset.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    let out = net.forward_eval(&data.features)?;
    let (loss, _) = data.targets.loss(net.spec().loss, &out)?;
    let accuracy = match &data.targets {
        Targets::Classes { labels, .. } => {
            let correct = labels
                .iter()
                .enumerate()
                .filter(|&(i, &l)| argmax(out.row(i)) == l)
                .count();
            Some(correct as f64 / labels.len() as f64)
        }
        Targets::Values(_) => None,
    };
    Ok(EvalMetrics { loss, accuracy })
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Splits shuffled indices into batches; a trailing singleton joins the previous batch
/// so that train-mode batch norm always sees at least two rows.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Mini-batch training. Deterministic for fixed network seed and `config.seed`.
///
/// `on_epoch` sees every record, including the initial one, with the network
/// state it describes.
pub fn train<F>(
    net: &mut Network,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(&EpochRecord, &Network) -> Result<()>,
{
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if let Some(m) = config.schedule.iter().find(|m| !(m.divisor.is_finite() && m.divisor > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "schedule divisor must be positive, got {}",
            m.divisor
        )));
    }
    let mut opt = OptimizerState::new(config.optimizer, net)?;
    let base_lr = config.optimizer.lr();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let record = |net: &Network, epoch: usize, lr: f64, train_loss: Option<f64>| -> Result<EpochRecord> {
        let tr = evaluate(net, train_set)?;
        let te = test_set.map(|t| evaluate(net, t)).transpose()?;
        Ok(EpochRecord {
            epoch,
            lr,
            train_loss: train_loss.unwrap_or(tr.loss),
            train_metric: tr.metric(),
            test_metric: te.map(|m| m.metric()),
        })
    };

    let initial = record(net, 0, lr_at(base_lr, &config.schedule, 0), None)?;
    on_epoch(&initial, net)?;
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut seconds = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = lr_at(base_lr, &config.schedule, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in batches(&order, config.batch_size).into_iter().enumerate() {
            let diverged = |e: Error| match e {
                Error::Numeric(detail) => Error::Diverged {
                    epoch: epoch + 1,
                    batch: b,
                    detail,
                },
                other => other,
            };
            let x = train_set.features.select_rows(idx)?;
            let t = train_set.targets.select(idx)?;
            let (out, caches) = net.forward_train(&x).map_err(diverged)?;
            let (loss, grad) = t.loss(net.spec().loss, &out).map_err(diverged)?;
            let (grads, _) = net.backward(&caches, &grad).map_err(diverged)?;
            opt.step(net, &grads, lr).map_err(diverged)?;
            loss_sum += loss * idx.len() as f64;
        }
        let rec = record(net, epoch + 1, lr, Some(loss_sum / train_set.len() as f64))
            .map_err(|e| match e {
                Error::Numeric(detail) => Error::Diverged { epoch: epoch + 1, batch: 0, detail },
                other => other,
            })?;
        seconds.push(started.elapsed().as_secs_f64());
        on_epoch(&rec, net)?;
        epochs.push(rec);
    }
    Ok(TrainReport {
        initial,
        epochs,
        seconds,
        snapshot: net.snapshot_id(),
    })
}

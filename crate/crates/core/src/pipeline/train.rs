use std::fmt::Write as _;

use crate::dataset::{LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;
use crate::nn::{argmax, batch_gradient, predict, AdamConfig, AdamState, ModelConfig, Params};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// `None` picks 300 epochs below 8 speakers and 500 from 8 up.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    /// Take the validation curve from the last `validation_fraction` of the
    /// training partition instead of the reserved validation partition.
    pub carve_validation: bool,
    pub validation_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: None,
            batch_size: 100,
            carve_validation: false,
            validation_fraction: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn epochs_for(&self, n_speakers: usize) -> usize {
        self.epochs.unwrap_or(if n_speakers >= 8 { 500 } else { 300 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == Some(0) {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

pub fn batches_per_epoch(n_train: usize, batch_size: usize) -> usize {
    n_train.div_ceil(batch_size)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Running accuracy over the epoch's training batches, before each update.
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Curves {
    pub epochs: Vec<EpochRecord>,
}

impl Curves {
    /// `epoch,train_accuracy,val_accuracy`; empty validation cells when there
    /// was no validation data.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_accuracy,val_accuracy\n");
        for e in &self.epochs {
            let val = e.val_accuracy.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.6},{val}", e.epoch, e.train_accuracy);
        }
        out
    }
}

/// Training runs in single precision.
pub struct TrainOutcome {
    pub params: Params<f32>,
    pub adam: AdamState<f32>,
    pub curves: Curves,
}

pub fn accuracy(params: &Params<f32>, items: &[(Matrix<f32>, usize)], exec: Execution) -> Result<f64> {
    let seqs: Vec<&Matrix<f32>> = items.iter().map(|i| &i.0).collect();
    let probs = predict(params, &seqs, exec)?;
    let correct = probs.iter().zip(items).filter(|(p, i)| argmax(p) == i.1).count();
    Ok(correct as f64 / items.len() as f64)
}

pub(super) fn single_precision(data: &LabeledDataset, part: Partition) -> Vec<(Matrix<f32>, usize)> {
    data.partition(part).map(|i| (i.sequence.frames().cast(), i.speaker)).collect()
}

/// Mini-batch Adam on the training partition, recording per-epoch curves.
pub fn train(
    data: &LabeledDataset,
    model: ModelConfig,
    config: &TrainConfig,
    rng: &Rng,
    exec: Execution,
) -> Result<TrainOutcome> {
    config.validate()?;
    let data = if config.carve_validation {
        data.carve_validation_from_train(config.validation_fraction)?
    } else {
        data.clone()
    };
    let train_items = single_precision(&data, Partition::Train);
    let val_items = single_precision(&data, Partition::Val);
    if train_items.is_empty() {
        return Err(Error::input("training partition is empty"));
    }
    if model.n_speakers != data.n_speakers() {
        return Err(Error::dimension("dense units", data.n_speakers(), model.n_speakers));
    }
    let mut params: Params<f32> = Params::<f64>::init(model, &rng.derive("init"))?.cast();
    let mut adam = AdamState::new(config.adam, &params);
    let mut shuffle = rng.derive("shuffle");
    let mut curves = Curves::default();
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    for epoch in 1..=config.epochs_for(data.n_speakers()) {
        shuffle.shuffle(&mut order);
        let (mut correct, mut loss) = (0usize, 0.0);
        for batch in order.chunks(config.batch_size) {
            let seqs: Vec<&Matrix<f32>> = batch.iter().map(|&i| &train_items[i].0).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_items[i].1).collect();
            let out = batch_gradient(&params, &seqs, &labels, exec)?;
            correct += out.correct;
            loss += out.loss * batch.len() as f64;
            adam.step(&mut params, &out.grads);
        }
        params.check_finite("parameters")?;
        let val_accuracy = if val_items.is_empty() {
            None
        } else {
            Some(accuracy(&params, &val_items, exec)?)
        };
        curves.epochs.push(EpochRecord {
            epoch,
            train_accuracy: correct as f64 / train_items.len() as f64,
            train_loss: loss / train_items.len() as f64,
            val_accuracy,
        });
    }
    Ok(TrainOutcome { params, adam, curves })
}

//! Mini-batch training with Adam and a step learning-rate schedule, plus
//! accuracy / confusion evaluation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, AdamConfig, LrSchedule, Parameterized, Tape};
use crate::data::LabeledSequence;
use crate::error::{Error, Result};
use crate::model::{argmax, GestFormerModel};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub schedule: LrSchedule,
    /// Seed of the per-epoch shuffle.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            adam: AdamConfig::default(),
            schedule: LrSchedule::default(),
            shuffle_seed: 0,
        }
    }
}

/// One line of the metrics log. `train_acc` is measured on the batches as
/// they are trained; `test_acc` after the epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    /// One-based.
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

pub const METRICS_HEADER: &str = "epoch,loss,train_acc,test_acc";

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{:.17e},{:.6},{:.6}",
            self.epoch, self.loss, self.train_acc, self.test_acc
        )
    }
}

fn check_labels(model: &GestFormerModel, data: &[LabeledSequence]) -> Result<()> {
    let n = model.config.classes;
    if let Some(s) = data.iter().find(|s| s.label >= n) {
        return Err(Error::config(format!(
            "sample {} has label {}, model has {n} classes",
            s.id, s.label
        )));
    }
    for s in data {
        if s.features.dims() != [model.config.frames, model.config.input_dim] {
            return Err(Error::config(format!(
                "sample {} has shape {}, model expects [{}×{}]",
                s.id,
                s.features.shape(),
                model.config.frames,
                model.config.input_dim
            )));
        }
    }
    Ok(())
}

fn first_non_finite(model: &GestFormerModel) -> Option<String> {
    model.params().into_iter().find_map(|p| {
        let bad_value = p.value.data().iter().any(|v| !v.is_finite());
        let bad_grad = p
            .value
            .grad
            .as_ref()
            .is_some_and(|g| g.iter().any(|v| !v.is_finite()));
        (bad_value || bad_grad).then(|| p.name.clone())
    })
}

/// Trains `model` in place, calling `on_epoch` after every epoch. Returns
/// all epoch metrics.
pub fn train(
    model: &mut GestFormerModel,
    train_set: &[LabeledSequence],
    test_set: &[LabeledSequence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    if config.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    if config.epochs > 0 && train_set.is_empty() {
        return Err(Error::input("empty training set"));
    }
    check_labels(model, train_set)?;
    check_labels(model, test_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut adam = Adam::new(config.adam.clone());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        adam.set_lr(config.schedule.lr_at(epoch));
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);

        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let mut rows = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let x = tape.leaf(train_set[i].features.clone());
                rows.push(model.record_logits(&mut tape, x)?);
                labels.push(train_set[i].label);
            }
            let logits = tape.stack_rows(&rows)?;
            let loss = tape.cross_entropy(logits, &labels)?;
            let batch_loss = tape.value(loss).item();

            for (r, &label) in rows.iter().zip(&labels) {
                correct += (argmax(tape.value(*r).data()) == label) as usize;
            }
            loss_sum += batch_loss * batch.len() as f64;

            let grads = tape.backward(loss)?;
            model.zero_grad();
            tape.accumulate_into(&grads, model.params_mut())?;
            if !batch_loss.is_finite() || first_non_finite(model).is_some() {
                let name = first_non_finite(model).unwrap_or_else(|| "<none>".into());
                return Err(Error::Numerical(format!(
                    "non-finite loss {batch_loss} at epoch {}, step {step}; first NaN parameter: {name}",
                    epoch + 1
                )));
            }
            adam.step(&mut model.params_mut())?;
            if let Some(name) = first_non_finite(model) {
                return Err(Error::Numerical(format!(
                    "parameter update produced non-finite values at epoch {}, step {step}; first NaN parameter: {name}",
                    epoch + 1
                )));
            }
        }
        model.zero_grad();

        let metrics = EpochMetrics {
            epoch: epoch + 1,
            loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            test_acc: if test_set.is_empty() {
                0.0
            } else {
                evaluate(model, test_set)?.accuracy
            },
        };
        on_epoch(&metrics)?;
        history.push(metrics);
    }
    Ok(history)
}

/// Mean cross entropy of `model` over `data`.
pub fn dataset_loss(model: &GestFormerModel, data: &[LabeledSequence]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("empty dataset"));
    }
    let mut total = 0.0;
    for s in data {
        let p = model.forward(&s.features)?;
        total -= p.data()[s.label].ln();
    }
    Ok(total / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
    pub posteriors: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.predictions.len()
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "accuracy = {:.6} ({}/{})",
            self.accuracy,
            self.correct(),
            self.total()
        )?;
        write!(f, "true\\pred")?;
        for j in 0..self.confusion.len() {
            write!(f, ",{j}")?;
        }
        for (i, row) in self.confusion.iter().enumerate() {
            write!(f, "\n{i}")?;
            for c in row {
                write!(f, ",{c}")?;
            }
        }
        Ok(())
    }
}

pub fn evaluate(model: &GestFormerModel, data: &[LabeledSequence]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::input("nothing to evaluate"));
    }
    check_labels(model, data)?;
    let n = model.config.classes;
    let mut confusion = vec![vec![0; n]; n];
    let mut predictions = Vec::with_capacity(data.len());
    let mut posteriors = Vec::with_capacity(data.len());
    for s in data {
        let p = model.forward(&s.features)?;
        let pred = argmax(p.data());
        confusion[s.label][pred] += 1;
        predictions.push(pred);
        posteriors.push(p.data().to_vec());
    }
    let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        confusion,
        predictions,
        posteriors,
    })
}

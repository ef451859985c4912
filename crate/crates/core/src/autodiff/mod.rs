//! Reverse-mode differentiation, loss, optimiser and gradient checking.

mod gradcheck;
mod optim;
mod tape;

pub use gradcheck::{
    check_gradients, check_model_gradients, rel_error, GradCheck, FD_STEP, GRADCHECK_TOLERANCE,
};
pub use optim::{Adam, AdamConfig, LrSchedule};
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A named learnable tensor. The gradient lives in `value.grad`.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Param {
            name: name.into(),
            value,
        }
    }
}

/// Something that owns an ordered, enumerable list of parameters.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.value.numel()).sum()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.value.zero_grad();
        }
    }
}

/// Mean over the batch of `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    cross_entropy_with_probs(logits, labels).map(|(l, _)| l)
}

pub(crate) fn cross_entropy_with_probs(
    logits: &Tensor,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if logits.dims().len() != 2 {
        return Err(Error::dim(format!(
            "cross_entropy expects B×n logits, got {}",
            logits.shape()
        )));
    }
    let (b, n) = (logits.dims()[0], logits.dims()[1]);
    if labels.len() != b {
        return Err(Error::dim(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::input(format!(
            "label {bad} out of range for {n} classes"
        )));
    }
    let mut probs = vec![0.0; b * n];
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits.data()[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + total.ln();
        loss += log_z - row[label];
        for j in 0..n {
            probs[i * n + j] = (row[j] - log_z).exp();
        }
    }
    Ok((loss / b as f64, probs))
}

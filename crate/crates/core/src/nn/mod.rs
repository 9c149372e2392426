//! Tensors, the CNN classifier, backprop, Adam and checkpoints.

mod adam;
pub mod checkpoint;
pub mod layers;
mod model;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use model::{
    backward, forward, forward_mfcc, init_params, logit_gradient, loss_and_backward, loss_value,
    mfcc_to_input, predict, Architecture, ForwardTrace, LossKind, ModelParams,
};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("forward trace was produced by different parameters")]
    StaleTrace,
    #[error("invalid soft label: {0}")]
    InvalidSoftLabel(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const SOFT_LABEL_TOLERANCE: f64 = 1e-6;

/// Probability vector over the classes.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    /// Checked constructor: every entry in `[0, 1]`, sum within 1e-6 of one.
    pub fn new(probs: Vec<f64>) -> Result<Self, NnError> {
        let label = Self(probs);
        label.validate()?;
        Ok(label)
    }

    /// Wrap a vector known to be a distribution (softmax output).
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn one_hot(class: usize, n: usize) -> Self {
        let mut v = vec![0.0; n];
        v[class] = 1.0;
        Self(v)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.0.is_empty() {
            return Err(NnError::InvalidSoftLabel("empty".into()));
        }
        if let Some(bad) = self.0.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(NnError::InvalidSoftLabel(format!("component {bad} outside [0, 1]")));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > SOFT_LABEL_TOLERANCE {
            return Err(NnError::InvalidSoftLabel(format!("sums to {sum}")));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest probability, first on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

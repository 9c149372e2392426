//! Weighted mini-batch gradient steps.
//!
//! Every training pass in the crate (supervised, Mix-Match, Co-Refinement,
//! Co-Refurbishing) reduces to a list of `(input, target, loss, weight)`
//! items fed through [`Learner::step`]. Sharing one code path is what makes
//! the neutralized semi-supervised schedule bit-identical to supervised
//! training.

use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::features::MfccMatrix;
use crate::nn::{self, AdamConfig, AdamState, LossKind, ModelParams, NnError, SoftLabel};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite loss or gradient in batch")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Labeled,
    Unlabeled,
}

#[derive(Clone, Debug)]
pub struct TrainItem<'a> {
    pub input: &'a MfccMatrix,
    pub target: SoftLabel,
    pub kind: LossKind,
    pub weight: f64,
    pub group: Group,
}

/// Per-group mean losses and the weighted total that was minimized.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLoss {
    pub labeled: f64,
    pub unlabeled: f64,
    pub total: f64,
}

/// Parameters plus optimizer state and the dropout stream.
#[derive(Clone, Debug)]
pub struct Learner {
    pub params: ModelParams,
    pub adam: AdamState,
    pub adam_cfg: AdamConfig,
    pub dropout_rng: Rng,
}

struct ItemResult {
    loss: f64,
    grads: Option<ModelParams>,
}

impl Learner {
    pub fn new(params: ModelParams, adam_cfg: AdamConfig, dropout_rng: Rng) -> Self {
        Self {
            adam: AdamState::new(&params),
            params,
            adam_cfg,
            dropout_rng,
        }
    }

    /// Loss and summed weighted gradient over `items`. Zero-weight items are
    /// evaluated in inference mode for the loss report only; they draw no
    /// dropout randomness and contribute no gradient.
    pub fn loss_and_grad(&mut self, items: &[TrainItem<'_>]) -> Result<(StepLoss, ModelParams), StepError> {
        let seeds: Vec<Option<u64>> = items
            .iter()
            .map(|it| (it.weight != 0.0).then(|| self.dropout_rng.random::<u64>()))
            .collect();
        let params = &self.params;
        let results: Vec<Result<ItemResult, NnError>> = items
            .par_iter()
            .zip(seeds.par_iter())
            .map(|(item, seed)| {
                let x = nn::mfcc_to_input(item.input);
                match seed {
                    None => {
                        let mut rng = Rng::seed_from_u64(0);
                        let (p, _) = nn::forward(params, &x, false, &mut rng)?;
                        Ok(ItemResult {
                            loss: nn::loss_value(p.probs(), item.target.probs(), item.kind),
                            grads: None,
                        })
                    }
                    Some(seed) => {
                        let mut rng = Rng::seed_from_u64(*seed);
                        let (p, trace) = nn::forward(params, &x, true, &mut rng)?;
                        let loss = nn::loss_value(p.probs(), item.target.probs(), item.kind);
                        let mut dz = nn::logit_gradient(p.probs(), item.target.probs(), item.kind);
                        dz.iter_mut().for_each(|g| *g *= item.weight);
                        let grads = nn::backward(params, &trace, &dz)?;
                        Ok(ItemResult {
                            loss,
                            grads: Some(grads),
                        })
                    }
                }
            })
            .collect();

        let mut total_grads = self.params.zeros_like();
        let mut loss = StepLoss::default();
        let (mut n_lab, mut n_unl) = (0usize, 0usize);
        for (item, res) in items.iter().zip(results) {
            let res = res?;
            if !res.loss.is_finite() {
                return Err(StepError::NonFinite);
            }
            match item.group {
                Group::Labeled => {
                    loss.labeled += res.loss;
                    n_lab += 1;
                }
                Group::Unlabeled => {
                    loss.unlabeled += res.loss;
                    n_unl += 1;
                }
            }
            loss.total += item.weight * res.loss;
            if let Some(g) = res.grads {
                total_grads.add_scaled(&g, 1.0);
            }
        }
        if n_lab > 0 {
            loss.labeled /= n_lab as f64;
        }
        if n_unl > 0 {
            loss.unlabeled /= n_unl as f64;
        }
        if !total_grads.is_finite() || !loss.total.is_finite() {
            return Err(StepError::NonFinite);
        }
        Ok((loss, total_grads))
    }

    /// One optimizer step on the weighted loss of `items`.
    pub fn step(&mut self, items: &[TrainItem<'_>]) -> Result<StepLoss, StepError> {
        let (loss, grads) = self.loss_and_grad(items)?;
        nn::adam_step(&mut self.params, &grads, &mut self.adam, &self.adam_cfg)?;
        if !self.params.is_finite() {
            return Err(StepError::NonFinite);
        }
        Ok(loss)
    }
}

/// Items for a plain supervised step: mean cross-entropy over the batch.
pub fn supervised_items<'a>(inputs: &[&'a MfccMatrix], targets: &[SoftLabel]) -> Vec<TrainItem<'a>> {
    let w = 1.0 / inputs.len() as f64;
    inputs
        .iter()
        .zip(targets)
        .map(|(x, y)| TrainItem {
            input: x,
            target: y.clone(),
            kind: LossKind::CrossEntropy,
            weight: w,
            group: Group::Labeled,
        })
        .collect()
}

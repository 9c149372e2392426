//! Semi-supervised batch strategies: Mix-Match, Co-Refinement and
//! Co-Refurbishing.
//!
//! Pseudo-labels are always produced by an inference-mode forward pass and
//! enter the loss as constants; nothing backpropagates through them.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::MfccMatrix;
use crate::learner::{supervised_items, Group, Learner, StepError, StepLoss, TrainItem};
use crate::nn::{self, LossKind, ModelParams, NnError, SoftLabel};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum SslError {
    #[error("cannot sharpen an all-zero distribution")]
    DegenerateInput,
    #[error("{0} batch is empty")]
    EmptyBatch(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Noise standard deviation as a fraction of the matrix's own std.
    pub noise_scale: f64,
    /// Widest time mask, in frames.
    pub max_mask_width: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_scale: 0.05,
            max_mask_width: 40,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            noise_scale: 0.0,
            max_mask_width: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    pub temperature: f64,
    pub n_augmentations: usize,
    pub mixup_alpha: f64,
    pub unlabeled_loss_weight: f64,
    /// Fraction of the semi-supervised epochs over which the unlabeled loss
    /// weight ramps linearly up to `unlabeled_loss_weight`.
    pub rampup_fraction: f64,
    pub refurbish_weight: f64,
    pub refurbish_fraction: f64,
    pub refinement_weight: f64,
    pub augment: AugmentConfig,
    /// Pin the mixup coefficient instead of sampling it.
    #[serde(default)]
    pub forced_lambda: Option<f64>,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            n_augmentations: 2,
            mixup_alpha: 0.75,
            unlabeled_loss_weight: 1.0,
            rampup_fraction: 0.25,
            refurbish_weight: 0.7,
            refurbish_fraction: 0.3,
            refinement_weight: 0.5,
            augment: AugmentConfig::default(),
            forced_lambda: None,
        }
    }
}

impl SslConfig {
    /// Every knob at the value that turns its pass into plain supervision.
    pub fn neutralized() -> Self {
        Self {
            temperature: 1.0,
            n_augmentations: 1,
            mixup_alpha: 0.75,
            unlabeled_loss_weight: 0.0,
            rampup_fraction: 0.0,
            refurbish_weight: 1.0,
            refurbish_fraction: 1.0,
            refinement_weight: 0.0,
            augment: AugmentConfig::disabled(),
            forced_lambda: Some(1.0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.temperature > 0.0) {
            return Err(format!("temperature {} must be positive", self.temperature));
        }
        if self.n_augmentations == 0 {
            return Err("n_augmentations must be at least 1".into());
        }
        if !(self.mixup_alpha > 0.0) {
            return Err(format!("mixup_alpha {} must be positive", self.mixup_alpha));
        }
        if !unit(self.unlabeled_loss_weight)
            || !unit(self.refurbish_weight)
            || !unit(self.refurbish_fraction)
            || !unit(self.refinement_weight)
            || !unit(self.rampup_fraction)
        {
            return Err("loss weights and fractions must lie in [0, 1]".into());
        }
        if let Some(l) = self.forced_lambda {
            if !unit(l) {
                return Err(format!("forced_lambda {l} not in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Unlabeled loss weight for `epoch` (0-based) of `epochs`.
    pub fn unlabeled_weight_at(&self, epoch: usize, epochs: usize) -> f64 {
        let ramp = (self.rampup_fraction * epochs as f64).ceil();
        if ramp <= 0.0 {
            return self.unlabeled_loss_weight;
        }
        self.unlabeled_loss_weight * ((epoch + 1) as f64 / ramp).min(1.0)
    }
}

/// Gaussian noise scaled to the matrix's spread, plus one time mask set to
/// the matrix mean.
pub fn augment(x: &MfccMatrix, cfg: &AugmentConfig, rng: &mut Rng) -> MfccMatrix {
    let mut out = x.clone();
    let mean = x.mean();
    if cfg.noise_scale > 0.0 {
        let sigma = cfg.noise_scale * x.std_dev();
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("finite sigma");
            out.values_mut().iter_mut().for_each(|v| *v += noise.sample(rng));
        }
    }
    let frames = x.n_frames();
    let max_width = cfg.max_mask_width.min(frames);
    if max_width > 0 {
        let width = rng.random_range(0..=max_width);
        let start = rng.random_range(0..=frames - width);
        for c in 0..x.n_coefficients() {
            let row = c * frames;
            out.values_mut()[row + start..row + start + width].fill(mean);
        }
    }
    out
}

/// `p_i^(1/T) / sum_j p_j^(1/T)`.
pub fn sharpen(p: &SoftLabel, temperature: f64) -> Result<SoftLabel, SslError> {
    assert!(temperature > 0.0, "temperature must be positive");
    if p.probs().iter().all(|&v| v == 0.0) {
        return Err(SslError::DegenerateInput);
    }
    if temperature == 1.0 {
        return Ok(p.clone());
    }
    let powered: Vec<f64> = p.probs().iter().map(|v| v.powf(1.0 / temperature)).collect();
    let sum: f64 = powered.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(SslError::DegenerateInput);
    }
    Ok(SoftLabel::new(powered.into_iter().map(|v| v / sum).collect())?)
}

/// Inference-mode predictions, computed in parallel, returned in order.
pub fn predict_all(params: &ModelParams, xs: &[&MfccMatrix]) -> Result<Vec<SoftLabel>, NnError> {
    xs.par_iter().map(|x| nn::predict(params, x)).collect()
}

fn average(labels: &[SoftLabel]) -> SoftLabel {
    let n = labels[0].len();
    let mut acc = vec![0.0; n];
    for l in labels {
        acc.iter_mut().zip(l.probs()).for_each(|(a, p)| *a += p);
    }
    acc.iter_mut().for_each(|a| *a /= labels.len() as f64);
    SoftLabel::new(acc).expect("mean of distributions is a distribution")
}

/// Averaged prediction over already-augmented views, then sharpened.
pub fn guess_from_views(params: &ModelParams, views: &[&MfccMatrix], temperature: f64) -> Result<SoftLabel, SslError> {
    let preds = predict_all(params, views)?;
    sharpen(&average(&preds), temperature)
}

/// Label guess for `u`: mean inference prediction over `k` augmentations,
/// sharpened with `temperature`.
pub fn guess_label(
    params: &ModelParams,
    u: &MfccMatrix,
    k: usize,
    temperature: f64,
    augment_cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<SoftLabel, SslError> {
    let views: Vec<MfccMatrix> = (0..k.max(1)).map(|_| augment(u, augment_cfg, rng)).collect();
    let refs: Vec<&MfccMatrix> = views.iter().collect();
    guess_from_views(params, &refs, temperature)
}

/// Draw the mixup coefficient `max(l, 1 - l)` with `l ~ Beta(alpha, alpha)`.
pub fn draw_lambda(alpha: f64, rng: &mut Rng) -> f64 {
    let l: f64 = Beta::new(alpha, alpha).expect("alpha > 0").sample(rng);
    l.max(1.0 - l)
}

/// Convex combination weighted `lambda` toward the first argument.
pub fn mix_with(
    lambda: f64,
    x1: &MfccMatrix,
    y1: &SoftLabel,
    x2: &MfccMatrix,
    y2: &SoftLabel,
) -> (MfccMatrix, SoftLabel) {
    assert_eq!(x1.shape(), x2.shape(), "mixup inputs differ in shape");
    let rest = 1.0 - lambda;
    let xv = x1
        .values()
        .iter()
        .zip(x2.values())
        .map(|(a, b)| lambda * a + rest * b)
        .collect();
    let yv = y1
        .probs()
        .iter()
        .zip(y2.probs())
        .map(|(a, b)| lambda * a + rest * b)
        .collect();
    let (r, c) = x1.shape();
    (
        MfccMatrix::new(r, c, xv),
        SoftLabel::new(yv).expect("convex combination of distributions"),
    )
}

/// Mixup with a Beta-drawn (or forced) coefficient; returns the coefficient
/// actually used.
pub fn mixup(
    x1: &MfccMatrix,
    y1: &SoftLabel,
    x2: &MfccMatrix,
    y2: &SoftLabel,
    alpha: f64,
    forced_lambda: Option<f64>,
    rng: &mut Rng,
) -> (MfccMatrix, SoftLabel, f64) {
    let lambda = forced_lambda.unwrap_or_else(|| draw_lambda(alpha, rng));
    let (x, y) = mix_with(lambda, x1, y1, x2, y2);
    (x, y, lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    FromLabeled,
    FromUnlabeled,
}

#[derive(Clone, Debug, Default)]
pub struct MixedBatch {
    pub inputs: Vec<MfccMatrix>,
    pub targets: Vec<SoftLabel>,
    pub origin: Vec<Origin>,
}

impl MixedBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Random streams consumed by Mix-Match.
pub struct MixMatchRng<'a> {
    pub augment: &'a mut Rng,
    pub mixup: &'a mut Rng,
}

/// Mix-Match batch construction.
///
/// Labeled items are augmented once and keep their labels; each unlabeled
/// item yields `K` augmented views sharing one sharpened guess. The pooled
/// items are shuffled and each original item is mixed with one shuffled
/// partner. The first output holds mixes of labeled items, the second mixes
/// of unlabeled views.
pub fn mixmatch(
    labeled_x: &[&MfccMatrix],
    labeled_y: &[SoftLabel],
    unlabeled: &[&MfccMatrix],
    params: &ModelParams,
    cfg: &SslConfig,
    rng: MixMatchRng<'_>,
) -> Result<(MixedBatch, MixedBatch), SslError> {
    if labeled_x.is_empty() {
        return Err(SslError::EmptyBatch("labeled"));
    }
    if unlabeled.is_empty() {
        return Err(SslError::EmptyBatch("unlabeled"));
    }
    let k = cfg.n_augmentations;
    let x_hat: Vec<MfccMatrix> = labeled_x.iter().map(|x| augment(x, &cfg.augment, rng.augment)).collect();

    let mut u_hat = Vec::with_capacity(unlabeled.len() * k);
    let mut u_targets = Vec::with_capacity(unlabeled.len() * k);
    for u in unlabeled {
        let views: Vec<MfccMatrix> = (0..k).map(|_| augment(u, &cfg.augment, rng.augment)).collect();
        let refs: Vec<&MfccMatrix> = views.iter().collect();
        let guess = guess_from_views(params, &refs, cfg.temperature)?;
        for v in views {
            u_hat.push(v);
            u_targets.push(guess.clone());
        }
    }

    // pool of (input, target) references, shuffled
    let mut pool: Vec<(&MfccMatrix, &SoftLabel)> = x_hat
        .iter()
        .zip(labeled_y)
        .chain(u_hat.iter().zip(&u_targets))
        .collect();
    pool.shuffle(rng.mixup);

    let mut x_batch = MixedBatch::default();
    for (i, (x, y)) in x_hat.iter().zip(labeled_y).enumerate() {
        let (w_x, w_y) = pool[i];
        let (mx, my, _) = mixup(x, y, w_x, w_y, cfg.mixup_alpha, cfg.forced_lambda, rng.mixup);
        x_batch.inputs.push(mx);
        x_batch.targets.push(my);
        x_batch.origin.push(Origin::FromLabeled);
    }
    let mut u_batch = MixedBatch::default();
    for (i, (x, y)) in u_hat.iter().zip(&u_targets).enumerate() {
        let (w_x, w_y) = pool[x_hat.len() + i];
        let (mx, my, _) = mixup(x, y, w_x, w_y, cfg.mixup_alpha, cfg.forced_lambda, rng.mixup);
        u_batch.inputs.push(mx);
        u_batch.targets.push(my);
        u_batch.origin.push(Origin::FromUnlabeled);
    }
    Ok((x_batch, u_batch))
}

/// Training items for the Mix-Match objective: mean cross-entropy over the
/// labeled mixes plus `unlabeled_weight` times the mean squared error (in
/// probability space) over the unlabeled mixes.
pub fn mixmatch_items<'a>(x_batch: &'a MixedBatch, u_batch: &'a MixedBatch, unlabeled_weight: f64) -> Vec<TrainItem<'a>> {
    let refs: Vec<&MfccMatrix> = x_batch.inputs.iter().collect();
    let mut items = supervised_items(&refs, &x_batch.targets);
    if !u_batch.is_empty() {
        let w = unlabeled_weight / u_batch.len() as f64;
        items.extend(u_batch.inputs.iter().zip(&u_batch.targets).map(|(x, y)| TrainItem {
            input: x,
            target: y.clone(),
            kind: LossKind::SquaredError,
            weight: w,
            group: Group::Unlabeled,
        }));
    }
    items
}

/// Inference-mode value of the Mix-Match objective, by component.
pub fn mixmatch_loss(
    params: &ModelParams,
    x_batch: &MixedBatch,
    u_batch: &MixedBatch,
    unlabeled_weight: f64,
) -> Result<StepLoss, SslError> {
    let mean_loss = |batch: &MixedBatch, kind: LossKind| -> Result<f64, SslError> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let refs: Vec<&MfccMatrix> = batch.inputs.iter().collect();
        let preds = predict_all(params, &refs)?;
        let sum: f64 = preds
            .iter()
            .zip(&batch.targets)
            .map(|(p, y)| nn::loss_value(p.probs(), y.probs(), kind))
            .sum();
        Ok(sum / batch.len() as f64)
    };
    let labeled = mean_loss(x_batch, LossKind::CrossEntropy)?;
    let unlabeled = mean_loss(u_batch, LossKind::SquaredError)?;
    Ok(StepLoss {
        labeled,
        unlabeled,
        total: labeled + unlabeled_weight * unlabeled,
    })
}

/// One Mix-Match optimizer step.
pub fn mixmatch_step(
    learner: &mut Learner,
    labeled_x: &[&MfccMatrix],
    labeled_y: &[SoftLabel],
    unlabeled: &[&MfccMatrix],
    cfg: &SslConfig,
    unlabeled_weight: f64,
    rng: MixMatchRng<'_>,
) -> Result<StepLoss, SslError> {
    let (xb, ub) = mixmatch(labeled_x, labeled_y, unlabeled, &learner.params, cfg, rng)?;
    Ok(learner.step(&mixmatch_items(&xb, &ub, unlabeled_weight))?)
}

fn unlabeled_items<'a>(unlabeled: &[&'a MfccMatrix], targets: Vec<SoftLabel>, weight: f64) -> Vec<TrainItem<'a>> {
    let w = weight / unlabeled.len() as f64;
    unlabeled
        .iter()
        .zip(targets)
        .map(|(x, y)| TrainItem {
            input: x,
            target: y,
            kind: LossKind::CrossEntropy,
            weight: w,
            group: Group::Unlabeled,
        })
        .collect()
}

/// Co-Refinement: the model's own inference-mode predictions on the
/// unlabeled batch become soft targets next to the labeled batch; one step on
/// `CE(labeled) + weight * CE(unlabeled, predictions)`.
pub fn co_refinement_step(
    learner: &mut Learner,
    labeled_x: &[&MfccMatrix],
    labeled_y: &[SoftLabel],
    unlabeled: &[&MfccMatrix],
    refinement_weight: f64,
) -> Result<StepLoss, SslError> {
    if labeled_x.is_empty() {
        return Err(SslError::EmptyBatch("labeled"));
    }
    if unlabeled.is_empty() {
        return Err(SslError::EmptyBatch("unlabeled"));
    }
    let targets = predict_all(&learner.params, unlabeled)?;
    let mut items = supervised_items(labeled_x, labeled_y);
    items.extend(unlabeled_items(unlabeled, targets, refinement_weight));
    Ok(learner.step(&items)?)
}

/// `weight * y_true + (1 - weight) * p_model`.
pub fn refurbish_target(y_true: &SoftLabel, p_model: &SoftLabel, weight: f64) -> SoftLabel {
    let v = y_true
        .probs()
        .iter()
        .zip(p_model.probs())
        .map(|(y, p)| weight * y + (1.0 - weight) * p)
        .collect();
    SoftLabel::new(v).expect("convex combination of distributions")
}

/// Co-Refurbishing: a random `fraction` of the labeled batch has its target
/// replaced by `weight * y_true + (1 - weight) * prediction`; unlabeled items
/// join with their predictions at loss weight `1 - weight`.
pub fn co_refurbishing_step(
    learner: &mut Learner,
    labeled_x: &[&MfccMatrix],
    labeled_y: &[SoftLabel],
    unlabeled: &[&MfccMatrix],
    weight: f64,
    fraction: f64,
    rng: &mut Rng,
) -> Result<StepLoss, SslError> {
    if labeled_x.is_empty() {
        return Err(SslError::EmptyBatch("labeled"));
    }
    if unlabeled.is_empty() {
        return Err(SslError::EmptyBatch("unlabeled"));
    }
    let n = labeled_x.len();
    let n_refurb = ((fraction * n as f64).round() as usize).min(n);
    let chosen = rand::seq::index::sample(rng, n, n_refurb).into_vec();
    let chosen_x: Vec<&MfccMatrix> = chosen.iter().map(|&i| labeled_x[i]).collect();
    let preds = predict_all(&learner.params, &chosen_x)?;

    let mut targets = labeled_y.to_vec();
    for (&i, p) in chosen.iter().zip(&preds) {
        targets[i] = refurbish_target(&labeled_y[i], p, weight);
    }
    let unlabeled_targets = predict_all(&learner.params, unlabeled)?;
    let mut items = supervised_items(labeled_x, &targets);
    items.extend(unlabeled_items(unlabeled, unlabeled_targets, 1.0 - weight));
    Ok(learner.step(&items)?)
}

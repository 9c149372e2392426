//! Baseline and semi-supervised training schedules.
//!
//! A semi-supervised epoch is one Mix-Match pass, one Co-Refinement pass and
//! one Co-Refurbishing pass over freshly drawn batches. After the last epoch
//! the model is refit on the labeled data with a fresh optimizer and early
//! stopping on validation accuracy. The baseline is that refit alone.

use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{nearest_share, FeatureCache, SplitManifest};
use crate::features::MfccMatrix;
use crate::learner::{supervised_items, Learner, StepError, StepLoss};
use crate::nn::{init_params, AdamConfig, AdamState, Architecture, ModelParams, SoftLabel};
use crate::rng::{stream, Rng, RunStreams, Stream};
use crate::ssl::{self, MixMatchRng, SslConfig, SslError};
use crate::NUM_CLASSES;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("recording {0} is in the split manifest but not in the feature cache")]
    MissingRecording(u32),
    #[error("recording {0} has no class in the feature cache")]
    MissingLabel(u32),
    #[error("no labeled training data")]
    NoLabeledData,
    #[error("semi-supervised training needs unlabeled data")]
    NoUnlabeledData,
    #[error("non-finite loss in {phase} epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        phase: String,
        epoch: usize,
        batch: usize,
        manifest: Box<RunManifest>,
    },
    #[error(transparent)]
    Step(StepError),
    #[error(transparent)]
    Ssl(SslError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Baseline,
    Semi,
}

/// Which semi-supervised passes to skip.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    CoRefinement,
    CoRefurbishing,
    Both,
}

impl Ablation {
    pub fn tag(self) -> &'static str {
        match self {
            Ablation::None => "full",
            Ablation::CoRefinement => "no_co_refinement",
            Ablation::CoRefurbishing => "no_co_refurbishing",
            Ablation::Both => "mixmatch_only",
        }
    }

    pub fn runs_co_refinement(self) -> bool {
        matches!(self, Ablation::None | Ablation::CoRefurbishing)
    }

    pub fn runs_co_refurbishing(self) -> bool {
        matches!(self, Ablation::None | Ablation::CoRefinement)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Semi-supervised epochs. Ignored in baseline mode.
    pub epochs: usize,
    /// Supervised epochs: the whole baseline run, or the final refit.
    pub refit_epochs: usize,
    pub batch_size: usize,
    pub mode: Mode,
    pub drop: Ablation,
    pub ssl: SslConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
}

fn default_dropout() -> f64 {
    0.2
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            refit_epochs: 60,
            batch_size: 16,
            mode: Mode::Baseline,
            drop: Ablation::None,
            ssl: SslConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
            early_stop_patience: 10,
            validation_fraction: 0.1,
            dropout_rate: default_dropout(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.refit_epochs == 0 && (self.mode == Mode::Baseline || self.epochs == 0) {
            return bad("nothing to train: no epochs".into());
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction {} not in [0, 0.5)", self.validation_fraction));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} not in [0, 1)", self.dropout_rate));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad(format!("learning rate {}", self.adam.lr));
        }
        if self.mode == Mode::Semi {
            self.ssl.validate().map_err(TrainError::InvalidConfig)?;
        }
        Ok(())
    }

    pub fn run_tag(&self) -> String {
        match self.mode {
            Mode::Baseline => format!("baseline_seed{}", self.seed),
            Mode::Semi => format!("semi_{}_seed{}", self.drop.tag(), self.seed),
        }
    }
}

/// Borrowed view of the cached features arranged by split.
#[derive(Clone, Debug, Default)]
pub struct SplitView<'a> {
    pub labeled: Vec<&'a MfccMatrix>,
    pub labeled_y: Vec<usize>,
    pub validation: Vec<&'a MfccMatrix>,
    pub validation_y: Vec<usize>,
    pub unlabeled: Vec<&'a MfccMatrix>,
    pub test: Vec<&'a MfccMatrix>,
    pub test_y: Vec<usize>,
}

fn labeled_record(cache: &FeatureCache, id: u32) -> Result<(&MfccMatrix, usize), TrainError> {
    let rec = cache.get(id).ok_or(TrainError::MissingRecording(id))?;
    let class = rec.class.ok_or(TrainError::MissingLabel(id))?;
    Ok((&rec.features, class.class_id()))
}

impl<'a> SplitView<'a> {
    /// Arrange cache records by the manifest. A stratified
    /// `validation_fraction` of the labeled training ids is held out;
    /// classes of unlabeled ids are never looked at.
    pub fn new(
        cache: &'a FeatureCache,
        manifest: &SplitManifest,
        validation_fraction: f64,
        seed: u64,
    ) -> Result<Self, TrainError> {
        let mut per_class: Vec<Vec<(&MfccMatrix, usize)>> = vec![Vec::new(); NUM_CLASSES];
        for &id in &manifest.train_labeled {
            let (x, c) = labeled_record(cache, id)?;
            per_class[c].push((x, c));
        }
        let mut rng = stream(seed, Stream::Split);
        // away from the positions the split itself consumes
        rng.set_word_pos(1 << 60);
        let mut view = SplitView::default();
        for mut items in per_class {
            items.shuffle(&mut rng);
            let n_val = nearest_share(items.len(), validation_fraction);
            for (i, (x, c)) in items.into_iter().enumerate() {
                if i < n_val {
                    view.validation.push(x);
                    view.validation_y.push(c);
                } else {
                    view.labeled.push(x);
                    view.labeled_y.push(c);
                }
            }
        }
        for &id in &manifest.train_unlabeled {
            view.unlabeled
                .push(&cache.get(id).ok_or(TrainError::MissingRecording(id))?.features);
        }
        for &id in &manifest.test {
            let (x, c) = labeled_record(cache, id)?;
            view.test.push(x);
            view.test_y.push(c);
        }
        Ok(view)
    }

    /// All labeled items used for training, without a validation slice.
    pub fn from_parts(labeled: Vec<&'a MfccMatrix>, labeled_y: Vec<usize>, unlabeled: Vec<&'a MfccMatrix>) -> Self {
        Self {
            labeled,
            labeled_y,
            unlabeled,
            ..Self::default()
        }
    }
}

/// Named training pass, recorded in epoch metrics in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    Supervised,
    MixMatch,
    CoRefinement,
    CoRefurbishing,
}

impl Pass {
    fn name(self) -> &'static str {
        match self {
            Pass::Supervised => "supervised",
            Pass::MixMatch => "mixmatch",
            Pass::CoRefinement => "co_refinement",
            Pass::CoRefurbishing => "co_refurbishing",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassMetrics {
    pub pass: Pass,
    pub batches: usize,
    pub labeled_loss: f64,
    pub unlabeled_loss: f64,
    pub total_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub phase: String,
    pub epoch: usize,
    pub passes: Vec<PassMetrics>,
    pub unlabeled_weight: Option<f64>,
    pub validation_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub phase: String,
    pub epoch: usize,
    pub batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub tag: String,
    pub architecture: Architecture,
    pub split_seed: Option<u64>,
    pub feature_config_hash: Option<String>,
    pub streams: Vec<String>,
    pub epochs: Vec<EpochMetrics>,
    pub best_refit_epoch: Option<usize>,
    pub stopped_early: bool,
    pub wall_clock_secs: f64,
    pub checkpoint: Option<String>,
    pub failure: Option<FailureRecord>,
    /// Input file digests, filled in by the caller.
    #[serde(default)]
    pub inputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(config: &TrainConfig, architecture: &Architecture) -> Self {
        Self {
            config: config.clone(),
            tag: config.run_tag(),
            architecture: architecture.clone(),
            split_seed: None,
            feature_config_hash: None,
            streams: Stream::ALL.iter().map(|s| s.name().to_string()).collect(),
            epochs: Vec::new(),
            best_refit_epoch: None,
            stopped_early: false,
            wall_clock_secs: 0.0,
            checkpoint: None,
            failure: None,
            inputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validation_trace(&self) -> Vec<Option<f64>> {
        self.epochs.iter().map(|e| e.validation_accuracy).collect()
    }

    /// Pass names of every semi-supervised epoch, in order.
    pub fn schedule(&self) -> Vec<Vec<&'static str>> {
        self.epochs
            .iter()
            .filter(|e| e.phase == "semi")
            .map(|e| e.passes.iter().map(|p| p.pass.name()).collect())
            .collect()
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub manifest: RunManifest,
}

/// Mutable state of one run: learner plus the remaining random streams.
pub struct Trainer {
    pub learner: Learner,
    pub streams: RunStreams,
}

/// Where in the schedule a batch failed.
struct BatchFault {
    batch: usize,
    error: TrainError,
}

fn step_fault(batch: usize, e: StepError) -> BatchFault {
    BatchFault {
        batch,
        error: TrainError::Step(e),
    }
}

fn ssl_fault(batch: usize, e: SslError) -> BatchFault {
    BatchFault {
        batch,
        error: match e {
            SslError::Step(s) => TrainError::Step(s),
            other => TrainError::Ssl(other),
        },
    }
}

fn gather<'a>(idx: &[usize], pool: &[&'a MfccMatrix]) -> Vec<&'a MfccMatrix> {
    idx.iter().map(|&i| pool[i]).collect()
}

fn one_hots(ys: &[usize]) -> Vec<SoftLabel> {
    ys.iter().map(|&c| SoftLabel::one_hot(c, NUM_CLASSES)).collect()
}

fn permuted_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

struct Accum {
    pass: Pass,
    batches: usize,
    sum: StepLoss,
}

impl Accum {
    fn new(pass: Pass) -> Self {
        Self {
            pass,
            batches: 0,
            sum: StepLoss::default(),
        }
    }

    fn add(&mut self, l: StepLoss) {
        self.batches += 1;
        self.sum.labeled += l.labeled;
        self.sum.unlabeled += l.unlabeled;
        self.sum.total += l.total;
    }

    fn finish(self) -> PassMetrics {
        let n = self.batches.max(1) as f64;
        PassMetrics {
            pass: self.pass,
            batches: self.batches,
            labeled_loss: self.sum.labeled / n,
            unlabeled_loss: self.sum.unlabeled / n,
            total_loss: self.sum.total / n,
        }
    }
}

impl Trainer {
    /// Fresh parameters from the init stream of `seed`.
    pub fn new(arch: &Architecture, adam: AdamConfig, seed: u64) -> Self {
        let mut streams = RunStreams::new(seed);
        let params = init_params(arch, &mut streams.init);
        let dropout = streams.dropout.clone();
        Self {
            learner: Learner::new(params, adam, dropout),
            streams,
        }
    }

    /// One pass of mean cross-entropy over shuffled labeled batches.
    pub fn run_supervised_epoch(&mut self, view: &SplitView<'_>, batch_size: usize) -> Result<PassMetrics, TrainError> {
        self.supervised_pass(view, batch_size).map_err(|f| f.error)
    }

    fn supervised_pass(&mut self, view: &SplitView<'_>, batch_size: usize) -> Result<PassMetrics, BatchFault> {
        let targets = one_hots(&view.labeled_y);
        let mut acc = Accum::new(Pass::Supervised);
        for (b, idx) in permuted_batches(view.labeled.len(), batch_size, &mut self.streams.shuffle)
            .into_iter()
            .enumerate()
        {
            let xs: Vec<&MfccMatrix> = idx.iter().map(|&i| view.labeled[i]).collect();
            let ys: Vec<SoftLabel> = idx.iter().map(|&i| targets[i].clone()).collect();
            let loss = self
                .learner
                .step(&supervised_items(&xs, &ys))
                .map_err(|e| step_fault(b, e))?;
            acc.add(loss);
        }
        Ok(acc.finish())
    }

    /// Labeled batches for one pass, each paired with an unlabeled batch.
    /// Unlabeled batches repeat when the unlabeled pool runs out first.
    fn paired_batches(&mut self, view: &SplitView<'_>, batch_size: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
        let lab = permuted_batches(view.labeled.len(), batch_size, &mut self.streams.shuffle);
        let unl = permuted_batches(view.unlabeled.len(), batch_size, &mut self.streams.unlabeled_shuffle);
        lab.into_iter()
            .enumerate()
            .map(|(b, l)| (l, unl[b % unl.len()].clone()))
            .collect()
    }

    /// One semi-supervised epoch: Mix-Match, then the co-passes not dropped.
    pub fn run_semi_epoch(
        &mut self,
        view: &SplitView<'_>,
        cfg: &TrainConfig,
        unlabeled_weight: f64,
    ) -> Result<Vec<PassMetrics>, TrainError> {
        self.semi_epoch(view, cfg, unlabeled_weight).map_err(|(_, f)| f.error)
    }

    fn semi_epoch(
        &mut self,
        view: &SplitView<'_>,
        cfg: &TrainConfig,
        unlabeled_weight: f64,
    ) -> Result<Vec<PassMetrics>, (Pass, BatchFault)> {
        let targets = one_hots(&view.labeled_y);
        let labels = |idx: &[usize]| -> Vec<SoftLabel> { idx.iter().map(|&i| targets[i].clone()).collect() };
        let mut out = Vec::new();

        let mut acc = Accum::new(Pass::MixMatch);
        for (b, (li, ui)) in self.paired_batches(view, cfg.batch_size).into_iter().enumerate() {
            let rng = MixMatchRng {
                augment: &mut self.streams.augment,
                mixup: &mut self.streams.mixup,
            };
            let loss = ssl::mixmatch_step(
                &mut self.learner,
                &gather(&li, &view.labeled),
                &labels(&li),
                &gather(&ui, &view.unlabeled),
                &cfg.ssl,
                unlabeled_weight,
                rng,
            )
            .map_err(|e| (Pass::MixMatch, ssl_fault(b, e)))?;
            acc.add(loss);
        }
        out.push(acc.finish());

        if cfg.drop.runs_co_refinement() {
            let mut acc = Accum::new(Pass::CoRefinement);
            for (b, (li, ui)) in self.paired_batches(view, cfg.batch_size).into_iter().enumerate() {
                let loss = ssl::co_refinement_step(
                    &mut self.learner,
                    &gather(&li, &view.labeled),
                    &labels(&li),
                    &gather(&ui, &view.unlabeled),
                    cfg.ssl.refinement_weight,
                )
                .map_err(|e| (Pass::CoRefinement, ssl_fault(b, e)))?;
                acc.add(loss);
            }
            out.push(acc.finish());
        }

        if cfg.drop.runs_co_refurbishing() {
            let mut acc = Accum::new(Pass::CoRefurbishing);
            for (b, (li, ui)) in self.paired_batches(view, cfg.batch_size).into_iter().enumerate() {
                let loss = ssl::co_refurbishing_step(
                    &mut self.learner,
                    &gather(&li, &view.labeled),
                    &labels(&li),
                    &gather(&ui, &view.unlabeled),
                    cfg.ssl.refurbish_weight,
                    cfg.ssl.refurbish_fraction,
                    &mut self.streams.refurbish,
                )
                .map_err(|e| (Pass::CoRefurbishing, ssl_fault(b, e)))?;
                acc.add(loss);
            }
            out.push(acc.finish());
        }
        Ok(out)
    }
}

/// Fraction of `xs` whose argmax prediction equals the label.
pub fn accuracy(params: &ModelParams, xs: &[&MfccMatrix], ys: &[usize]) -> Result<f64, TrainError> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let preds = ssl::predict_all(params, xs).map_err(|e| TrainError::Ssl(SslError::Nn(e)))?;
    let correct = preds.iter().zip(ys).filter(|(p, &y)| p.argmax() == y).count();
    Ok(correct as f64 / xs.len() as f64)
}

/// Argmax predictions for `xs`.
pub fn predict_classes(params: &ModelParams, xs: &[&MfccMatrix]) -> Result<Vec<usize>, TrainError> {
    let preds = ssl::predict_all(params, xs).map_err(|e| TrainError::Ssl(SslError::Nn(e)))?;
    Ok(preds.iter().map(SoftLabel::argmax).collect())
}

fn non_finite(manifest: &mut RunManifest, phase: &str, epoch: usize, fault: BatchFault, started: Instant) -> TrainError {
    match fault.error {
        TrainError::Step(StepError::NonFinite) => {
            manifest.failure = Some(FailureRecord {
                phase: phase.to_string(),
                epoch,
                batch: fault.batch,
            });
            manifest.wall_clock_secs = started.elapsed().as_secs_f64();
            TrainError::NonFiniteLoss {
                phase: phase.to_string(),
                epoch,
                batch: fault.batch,
                manifest: Box::new(manifest.clone()),
            }
        }
        other => other,
    }
}

fn architecture_for(view: &SplitView<'_>, cfg: &TrainConfig) -> Result<Architecture, TrainError> {
    let first = view.labeled.first().ok_or(TrainError::NoLabeledData)?;
    let (h, w) = first.shape();
    Ok(Architecture {
        dropout_rate: cfg.dropout_rate,
        ..Architecture::for_input(h, w)
    })
}

/// Supervised epochs with early stopping on validation accuracy; the
/// parameters of the best validation epoch are restored at the end.
fn refit(
    trainer: &mut Trainer,
    view: &SplitView<'_>,
    cfg: &TrainConfig,
    manifest: &mut RunManifest,
    started: Instant,
) -> Result<(), TrainError> {
    // fresh optimizer state for the refit
    trainer.learner.adam = AdamState::new(&trainer.learner.params);
    let has_val = !view.validation.is_empty();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.refit_epochs {
        let t0 = Instant::now();
        let metrics = trainer
            .supervised_pass(view, cfg.batch_size)
            .map_err(|f| non_finite(manifest, "refit", epoch, f, started))?;
        let val = if has_val {
            Some(accuracy(&trainer.learner.params, &view.validation, &view.validation_y)?)
        } else {
            None
        };
        debug!("refit epoch {epoch}: loss {:.4} val {:?}", metrics.total_loss, val);
        manifest.epochs.push(EpochMetrics {
            phase: "refit".into(),
            epoch,
            passes: vec![metrics],
            unlabeled_weight: None,
            validation_accuracy: val,
            seconds: t0.elapsed().as_secs_f64(),
        });
        if let Some(v) = val {
            let prev = best.as_ref().map(|(b, _, _)| *b);
            // ties move the checkpoint forward but do not reset patience
            if prev.is_none_or(|b| v >= b) {
                best = Some((v, epoch, trainer.learner.params.clone()));
            }
            if prev.is_none_or(|b| v > b) {
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                    info!("early stop after refit epoch {epoch}");
                    manifest.stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((_, epoch, params)) = best {
        trainer.learner.params = params;
        manifest.best_refit_epoch = Some(epoch);
    }
    Ok(())
}

/// Supervised cross-entropy training on the labeled split.
pub fn train_baseline(cfg: &TrainConfig, view: &SplitView<'_>) -> Result<TrainOutcome, TrainError> {
    let cfg = TrainConfig {
        mode: Mode::Baseline,
        ..cfg.clone()
    };
    cfg.validate()?;
    let started = Instant::now();
    let arch = architecture_for(view, &cfg)?;
    let mut trainer = Trainer::new(&arch, cfg.adam, cfg.seed);
    let mut manifest = RunManifest::new(&cfg, &arch);
    refit(&mut trainer, view, &cfg, &mut manifest, started)?;
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        params: trainer.learner.params,
        manifest,
    })
}

/// The semi-supervised schedule followed by the supervised refit.
pub fn train_semi(cfg: &TrainConfig, view: &SplitView<'_>) -> Result<TrainOutcome, TrainError> {
    let cfg = TrainConfig {
        mode: Mode::Semi,
        ..cfg.clone()
    };
    cfg.validate()?;
    let started = Instant::now();
    let arch = architecture_for(view, &cfg)?;
    if cfg.epochs > 0 && view.unlabeled.is_empty() {
        return Err(TrainError::NoUnlabeledData);
    }
    let mut trainer = Trainer::new(&arch, cfg.adam, cfg.seed);
    let mut manifest = RunManifest::new(&cfg, &arch);
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let w = cfg.ssl.unlabeled_weight_at(epoch, cfg.epochs);
        let passes = trainer
            .semi_epoch(view, &cfg, w)
            .map_err(|(pass, f)| non_finite(&mut manifest, pass.name(), epoch, f, started))?;
        let val = if view.validation.is_empty() {
            None
        } else {
            Some(accuracy(&trainer.learner.params, &view.validation, &view.validation_y)?)
        };
        debug!("semi epoch {epoch}: {:?} val {:?}", passes.iter().map(|p| p.total_loss).collect::<Vec<_>>(), val);
        manifest.epochs.push(EpochMetrics {
            phase: "semi".into(),
            epoch,
            passes,
            unlabeled_weight: Some(w),
            validation_accuracy: val,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    refit(&mut trainer, view, &cfg, &mut manifest, started)?;
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        params: trainer.learner.params,
        manifest,
    })
}

/// `train_semi` with the selected passes skipped.
pub fn ablate(cfg: &TrainConfig, view: &SplitView<'_>, drop: Ablation) -> Result<TrainOutcome, TrainError> {
    train_semi(&TrainConfig { drop, ..cfg.clone() }, view)
}

/// Dispatch on `cfg.mode`.
pub fn train(cfg: &TrainConfig, view: &SplitView<'_>) -> Result<TrainOutcome, TrainError> {
    match cfg.mode {
        Mode::Baseline => train_baseline(cfg, view),
        Mode::Semi => train_semi(cfg, view),
    }
}

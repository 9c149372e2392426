//! Respiratory sound classification: MFCC front end, a small 2x2-kernel CNN
//! trained from scratch, and three semi-supervised training passes
//! (Mix-Match, Co-Refinement, Co-Refurbishing) that make use of unlabeled
//! recordings.
//!
//! The crate is organised bottom-up:
//!
//! * [`audio_io`] decodes RIFF/WAVE files and resamples to the working rate.
//! * [`features`] turns a waveform into a fixed `40 x 862` MFCC matrix.
//! * [`nn`] holds the tensor kernels, the network, backprop, Adam and the
//!   checkpoint format.
//! * [`ssl`] implements the semi-supervised batch strategies.
//! * [`dataset`] ingests the corpus, builds stratified splits and the
//!   feature cache.
//! * [`training`] runs the baseline and semi-supervised schedules.
//! * [`evaluation`] produces confusion matrices and classification reports.
//! * [`synth`] generates a small six-class corpus for end-to-end checks.

pub mod audio_io;
pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod learner;
pub mod nn;
pub mod rng;
pub mod ssl;
pub mod synth;
pub mod training;

pub use audio_io::{AudioClip, WORKING_SAMPLE_RATE};
pub use dataset::{DiagnosisLabel, FeatureCache, RecordingMeta, SplitManifest};
pub use evaluation::{ClassificationReport, ConfusionMatrix};
pub use features::{MfccConfig, MfccMatrix};
pub use learner::{Learner, TrainItem};
pub use nn::{Architecture, ModelParams, SoftLabel, Tensor};
pub use ssl::SslConfig;
pub use training::{Ablation, Mode, RunManifest, TrainConfig};

/// Number of diagnosis classes the classifier distinguishes.
pub const NUM_CLASSES: usize = 6;

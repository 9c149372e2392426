//! `lungsound` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (missing, corrupt or
//! mismatched files), 3 numerical failure during training.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use sha2::{Digest, Sha256};

use lungsound::dataset::{self, DatasetError, FeatureCache, SplitManifest, SplitRequest, SplitUnit};
use lungsound::evaluation::{self, ClassificationReport};
use lungsound::learner::StepError;
use lungsound::nn::checkpoint::{self, CheckpointMeta};
use lungsound::training::{self, Ablation, Mode, SplitView, TrainConfig, TrainError};
use lungsound::{MfccConfig, SslConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "lungsound", version, about = "Lung sound classification with MFCC features and a small CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Featurize a corpus into a feature cache.
    Extract(ExtractArgs),
    /// Build a stratified train/unlabeled/test split from a cache.
    Split(SplitArgs),
    /// Train a baseline or semi-supervised model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Evaluate(EvaluateArgs),
    /// Print per-class metric deltas between two JSON reports (b - a).
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    audio_dir: PathBuf,
    #[arg(long)]
    diagnosis_csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 22050)]
    sample_rate: u32,
    #[arg(long, default_value_t = 20.0)]
    clip_seconds: f64,
    #[arg(long, default_value_t = 2048)]
    frame_length: usize,
    #[arg(long, default_value_t = 512)]
    hop_length: usize,
    #[arg(long, default_value_t = 128)]
    n_mels: usize,
    #[arg(long, default_value_t = 40)]
    n_mfcc: usize,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    unlabeled_fraction: f64,
    /// Keep all recordings of a patient in the same split.
    #[arg(long)]
    patient_level: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Baseline,
    Semi,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DropArg {
    CoRefinement,
    CoRefurbishing,
    Both,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "baseline")]
    mode: ModeArg,
    #[arg(long = "drop", value_enum)]
    drop: Option<DropArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 60)]
    refit_epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    /// Dropout rate after each pooling stage.
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[arg(long, default_value_t = 0.5)]
    temperature: f64,
    #[arg(long, default_value_t = 2)]
    augmentations: usize,
    #[arg(long, default_value_t = 0.75)]
    mixup_alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    unlabeled_weight: f64,
    #[arg(long, default_value_t = 0.7)]
    refurbish_weight: f64,
    #[arg(long, default_value_t = 0.3)]
    refurbish_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    refinement_weight: f64,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Data(format!("{context}: {e}"))
}

fn dataset_failure(context: impl std::fmt::Display, e: DatasetError) -> Failure {
    match e {
        DatasetError::ConfigHashMismatch { .. } => Failure::Data(format!("{context}: ConfigHashMismatch: {e}")),
        other => Failure::Data(format!("{context}: {other}")),
    }
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::InvalidConfig(m) => Failure::Usage(m),
        TrainError::NonFiniteLoss { .. } | TrainError::Step(StepError::NonFinite) => {
            Failure::Numerical(format!("NonFiniteLoss: {e}"))
        }
        other => Failure::Data(other.to_string()),
    }
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(data(path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(data(parent.display()))?;
    }
    fs::write(path, contents).map_err(data(path.display()))
}

fn extract(args: ExtractArgs) -> Result<(), Failure> {
    let mut cfg = MfccConfig {
        sample_rate: args.sample_rate,
        frame_length: args.frame_length,
        hop_length: args.hop_length,
        n_fft: args.frame_length,
        n_mel_filters: args.n_mels,
        n_coefficients: args.n_mfcc,
        ..MfccConfig::default()
    };
    if !(args.clip_seconds > 0.0) {
        return Err(Failure::Usage(format!("--clip-seconds must be positive, got {}", args.clip_seconds)));
    }
    cfg = cfg.with_clip_seconds(args.clip_seconds);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let diagnoses = dataset::load_diagnoses(&args.diagnosis_csv)
        .map_err(|e| dataset_failure(args.diagnosis_csv.display(), e))?;
    let corpus = dataset::scan_corpus(&args.audio_dir, &diagnoses)
        .map_err(|e| dataset_failure(args.audio_dir.display(), e))?;
    info!("featurizing {} recordings", corpus.recordings.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let build = pool
        .install(|| dataset::build_feature_cache(&corpus.recordings, &corpus.paths, &cfg, &BTreeSet::new()))
        .map_err(|e| dataset_failure("extract", e))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(data(parent.display()))?;
    }
    build.write(&args.out).map_err(|e| dataset_failure(args.out.display(), e))?;
    println!(
        "wrote {} records to {} ({} failed, {} excluded)",
        build.cache.len(),
        args.out.display(),
        build.index.failures.len(),
        corpus.excluded
    );
    for f in &build.index.failures {
        println!("  failed: {} ({})", f.stem, f.error);
    }
    Ok(())
}

fn open_cache(path: &Path) -> Result<(FeatureCache, dataset::CacheIndex), Failure> {
    FeatureCache::open(path).map_err(|e| dataset_failure(path.display(), e))
}

fn split(args: SplitArgs) -> Result<(), Failure> {
    if !(0.0..1.0).contains(&args.unlabeled_fraction) {
        return Err(Failure::Usage(format!(
            "--unlabeled-fraction must be in [0, 1), got {}",
            args.unlabeled_fraction
        )));
    }
    let (_, index) = open_cache(&args.cache)?;
    let req = SplitRequest {
        seed: args.seed,
        unlabeled_fraction: args.unlabeled_fraction,
        unit: if args.patient_level {
            SplitUnit::Patient
        } else {
            SplitUnit::Recording
        },
    };
    let manifest = dataset::make_splits(&index.recordings, &req).map_err(|e| dataset_failure("split", e))?;
    write_file(&args.out, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    println!(
        "labeled {} / unlabeled {} / test {} -> {}",
        manifest.train_labeled.len(),
        manifest.train_unlabeled.len(),
        manifest.test.len(),
        args.out.display()
    );
    Ok(())
}

fn load_manifest(path: &Path) -> Result<SplitManifest, Failure> {
    SplitManifest::load(path).map_err(|e| dataset_failure(path.display(), e))
}

fn train_config(args: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: args.epochs,
        refit_epochs: args.refit_epochs,
        batch_size: args.batch_size,
        mode: match args.mode {
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Semi => Mode::Semi,
        },
        drop: match args.drop {
            None => Ablation::None,
            Some(DropArg::CoRefinement) => Ablation::CoRefinement,
            Some(DropArg::CoRefurbishing) => Ablation::CoRefurbishing,
            Some(DropArg::Both) => Ablation::Both,
        },
        ssl: SslConfig {
            temperature: args.temperature,
            n_augmentations: args.augmentations,
            mixup_alpha: args.mixup_alpha,
            unlabeled_loss_weight: args.unlabeled_weight,
            refurbish_weight: args.refurbish_weight,
            refurbish_fraction: args.refurbish_fraction,
            refinement_weight: args.refinement_weight,
            ..SslConfig::default()
        },
        adam: lungsound::nn::AdamConfig {
            lr: args.lr,
            ..Default::default()
        },
        seed: args.seed,
        early_stop_patience: args.patience,
        validation_fraction: args.validation_fraction,
        dropout_rate: args.dropout,
    }
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let cfg = train_config(&args);
    if args.drop.is_some() && cfg.mode == Mode::Baseline {
        return Err(Failure::Usage("--drop only applies to --mode semi".into()));
    }
    cfg.validate().map_err(train_failure)?;
    let (cache, index) = open_cache(&args.cache)?;
    let split = load_manifest(&args.manifest)?;
    let view = SplitView::new(&cache, &split, cfg.validation_fraction, cfg.seed).map_err(train_failure)?;
    let inputs = vec![
        (args.cache.display().to_string(), sha256_file(&args.cache)?),
        (args.manifest.display().to_string(), sha256_file(&args.manifest)?),
    ];

    fs::create_dir_all(&args.out_dir).map_err(data(args.out_dir.display()))?;
    let tag = cfg.run_tag();
    let manifest_path = args.out_dir.join(format!("{tag}.json"));
    let checkpoint_path = args.out_dir.join(format!("{tag}.lsnn"));

    let outcome = match training::train(&cfg, &view) {
        Ok(o) => o,
        Err(TrainError::NonFiniteLoss {
            phase,
            epoch,
            batch,
            mut manifest,
        }) => {
            manifest.inputs = inputs;
            write_file(&manifest_path, manifest.to_json())?;
            return Err(Failure::Numerical(format!(
                "NonFiniteLoss in {phase} epoch {epoch}, batch {batch}; manifest at {}",
                manifest_path.display()
            )));
        }
        Err(e) => return Err(train_failure(e)),
    };

    let mut manifest = outcome.manifest;
    manifest.split_seed = Some(split.seed);
    manifest.feature_config_hash = Some(index.config_hash.clone());
    manifest.inputs = inputs;
    manifest.checkpoint = Some(checkpoint_path.display().to_string());
    let meta = CheckpointMeta {
        seed: cfg.seed,
        config_hash: index.config_hash,
        epoch: manifest.epochs.len(),
        architecture: outcome.params.arch.clone(),
        tag: tag.clone(),
    };
    checkpoint::save(&checkpoint_path, &outcome.params, &meta).map_err(data(checkpoint_path.display()))?;
    write_file(&manifest_path, manifest.to_json())?;
    println!("checkpoint {}", checkpoint_path.display());
    println!("manifest {}", manifest_path.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let (params, meta) = checkpoint::load(&args.checkpoint).map_err(data(args.checkpoint.display()))?;
    let (cache, index) = open_cache(&args.cache)?;
    if meta.config_hash != index.config_hash {
        return Err(dataset_failure(
            args.checkpoint.display(),
            DatasetError::ConfigHashMismatch {
                expected: index.config_hash,
                found: meta.config_hash,
            },
        ));
    }
    let split = load_manifest(&args.manifest)?;
    let view = SplitView::new(&cache, &split, 0.0, meta.seed).map_err(train_failure)?;
    if view.test.is_empty() {
        return Err(Failure::Data("the split has no test recordings".into()));
    }
    let pred = training::predict_classes(&params, &view.test).map_err(train_failure)?;
    let cm = evaluation::confusion(&view.test_y, &pred).map_err(data("evaluate"))?;
    let report = evaluation::report(&cm).map_err(data("evaluate"))?;
    let text = report.to_text();
    print!("{text}");
    write_file(&args.report, &text)?;
    if let Some(p) = &args.json {
        write_file(p, report.to_json())?;
    }
    if let Some(p) = &args.confusion {
        write_file(p, cm.to_csv())?;
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<ClassificationReport, Failure> {
    let text = fs::read_to_string(path).map_err(data(path.display()))?;
    ClassificationReport::from_json(&text).map_err(data(path.display()))
}

fn compare(args: CompareArgs) -> Result<(), Failure> {
    let a = read_report(&args.a)?;
    let b = read_report(&args.b)?;
    if a.classes != b.classes {
        return Err(Failure::Data("reports cover different classes".into()));
    }
    print!("{}", evaluation::format_comparison(&a, &b));
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("LUNG_SSL_LOG", "info");
    // a second call in the same process (tests) is harmless
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parse `argv` (including the program name) and run the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match cli.command {
        Command::Extract(a) => extract(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

//! Corpus ingestion, stratified splits and the binary feature cache.
//!
//! Recordings follow the `<patient>_<index>_<location>_<mode>_<equipment>.wav`
//! naming scheme; per-patient diagnoses come from a `patient_id,diagnosis`
//! CSV. Only the six in-scope diagnoses are kept.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{self, AudioError};
use crate::features::{FeatureError, MfccConfig, MfccExtractor, MfccMatrix};
use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed recording name {0:?}: expected <patient>_<index>_<location>_<mode>_<equipment>")]
    MalformedName(String),
    #[error("malformed diagnosis CSV line {line}: {text:?}")]
    MalformedCsv { line: usize, text: String },
    #[error("no diagnosis for patient {0}")]
    UnknownPatient(u32),
    #[error("no usable recordings")]
    NoUsableData,
    #[error("invalid split request: {0}")]
    InvalidSplit(String),
    #[error("feature cache was built with config {found}, expected {expected}")]
    ConfigHashMismatch { expected: String, found: String },
    #[error("corrupt feature cache: {0}")]
    CorruptCache(String),
    #[error("split manifest references recording {0} missing from the cache")]
    MissingRecording(u32),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosisLabel {
    Bronchiectasis = 0,
    Bronchiolitis = 1,
    #[serde(rename = "COPD")]
    Copd = 2,
    Healthy = 3,
    Pneumonia = 4,
    #[serde(rename = "URTI")]
    Urti = 5,
}

impl DiagnosisLabel {
    pub const ALL: [DiagnosisLabel; 6] = [
        DiagnosisLabel::Bronchiectasis,
        DiagnosisLabel::Bronchiolitis,
        DiagnosisLabel::Copd,
        DiagnosisLabel::Healthy,
        DiagnosisLabel::Pneumonia,
        DiagnosisLabel::Urti,
    ];

    pub fn class_id(self) -> usize {
        self as usize
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DiagnosisLabel::Bronchiectasis => "Bronchiectasis",
            DiagnosisLabel::Bronchiolitis => "Bronchiolitis",
            DiagnosisLabel::Copd => "COPD",
            DiagnosisLabel::Healthy => "Healthy",
            DiagnosisLabel::Pneumonia => "Pneumonia",
            DiagnosisLabel::Urti => "URTI",
        }
    }

    /// Case-insensitive match against the six class names.
    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim();
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(t))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub patient_id: u32,
    pub recording_index: String,
    pub chest_location: String,
    pub acquisition_mode: String,
    pub equipment: String,
    pub path: PathBuf,
}

pub fn parse_filename(stem: &str) -> Result<RecordingMeta, DatasetError> {
    let fields: Vec<&str> = stem.split('_').collect();
    if fields.len() != 5 || fields.iter().any(|f| f.is_empty()) {
        return Err(DatasetError::MalformedName(stem.to_string()));
    }
    let patient_id = fields[0]
        .parse()
        .map_err(|_| DatasetError::MalformedName(stem.to_string()))?;
    Ok(RecordingMeta {
        patient_id,
        recording_index: fields[1].to_string(),
        chest_location: fields[2].to_string(),
        acquisition_mode: fields[3].to_string(),
        equipment: fields[4].to_string(),
        path: PathBuf::from(format!("{stem}.wav")),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnosis {
    Class(DiagnosisLabel),
    /// A diagnosis outside the six classes (asthma, LRTI, ...).
    Excluded(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosisTable {
    pub entries: BTreeMap<u32, Diagnosis>,
}

impl DiagnosisTable {
    pub fn lookup(&self, patient: u32) -> Result<&Diagnosis, DatasetError> {
        self.entries.get(&patient).ok_or(DatasetError::UnknownPatient(patient))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse `patient_id,diagnosis` lines (comma or tab separated). A first
/// line whose id field is not numeric is taken as a header.
pub fn parse_diagnoses(text: &str) -> Result<DiagnosisTable, DatasetError> {
    let mut table = DiagnosisTable::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim().trim_start_matches('\u{feff}');
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, [',', '\t']);
        let (id, diag) = match (parts.next(), parts.next()) {
            (Some(id), Some(diag)) if !diag.trim().is_empty() => (id.trim(), diag.trim()),
            _ => {
                return Err(DatasetError::MalformedCsv {
                    line: i + 1,
                    text: line.to_string(),
                })
            }
        };
        let Ok(patient) = id.parse::<u32>() else {
            if i == 0 {
                continue;
            }
            return Err(DatasetError::MalformedCsv {
                line: i + 1,
                text: line.to_string(),
            });
        };
        let d = match DiagnosisLabel::parse(diag) {
            Some(c) => Diagnosis::Class(c),
            None => Diagnosis::Excluded(diag.to_string()),
        };
        table.entries.insert(patient, d);
    }
    Ok(table)
}

pub fn load_diagnoses(path: impl AsRef<Path>) -> Result<DiagnosisTable, DatasetError> {
    parse_diagnoses(&fs::read_to_string(path)?)
}

/// A usable recording: known id, in-scope label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: u32,
    pub stem: String,
    pub patient_id: u32,
    pub label: DiagnosisLabel,
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub recordings: Vec<Recording>,
    pub paths: Vec<PathBuf>,
    /// Recordings dropped because their patient's diagnosis is out of scope.
    pub excluded: usize,
    pub skipped_names: Vec<String>,
}

/// Collect every `.wav` under `audio_dir` with an in-scope diagnosis. Ids are
/// assigned in sorted file-stem order. Annotation `.txt` files and anything
/// else are ignored.
pub fn scan_corpus(audio_dir: &Path, diagnoses: &DiagnosisTable) -> Result<Corpus, DatasetError> {
    let mut stems: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(audio_dir)? {
        let path = entry?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if !is_wav {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            stems.push((stem.to_string(), path.clone()));
        }
    }
    stems.sort();

    let mut corpus = Corpus::default();
    for (stem, path) in stems {
        let meta = match parse_filename(&stem) {
            Ok(m) => m,
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                corpus.skipped_names.push(stem);
                continue;
            }
        };
        match diagnoses.lookup(meta.patient_id)? {
            Diagnosis::Excluded(_) => corpus.excluded += 1,
            Diagnosis::Class(label) => {
                corpus.recordings.push(Recording {
                    id: corpus.recordings.len() as u32,
                    stem,
                    patient_id: meta.patient_id,
                    label: *label,
                });
                corpus.paths.push(path);
            }
        }
    }
    if corpus.excluded > 0 {
        info!("dropped {} recordings with out-of-scope diagnoses", corpus.excluded);
    }
    if corpus.recordings.is_empty() {
        return Err(DatasetError::NoUsableData);
    }
    Ok(corpus)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    #[default]
    Recording,
    Patient,
}

pub const TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train_labeled: Vec<u32>,
    pub train_unlabeled: Vec<u32>,
    pub test: Vec<u32>,
    pub seed: u64,
    pub unlabeled_fraction: f64,
    pub test_fraction: f64,
    pub unit: SplitUnit,
    /// Every recording's true class, kept for auditing; the trainer never
    /// reads the entries of `train_unlabeled`.
    pub labels: BTreeMap<u32, DiagnosisLabel>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SplitManifest {
    /// The three sets are pairwise disjoint and cover every labelled id.
    pub fn check(&self) -> Result<(), DatasetError> {
        let mut seen = BTreeSet::new();
        for id in self.train_labeled.iter().chain(&self.train_unlabeled).chain(&self.test) {
            if !seen.insert(*id) {
                return Err(DatasetError::InvalidSplit(format!("recording {id} appears twice")));
            }
        }
        if seen.len() != self.labels.len() || !self.labels.keys().all(|k| seen.contains(k)) {
            return Err(DatasetError::InvalidSplit("splits do not cover the corpus".into()));
        }
        Ok(())
    }

    pub fn test_supports(&self) -> [usize; 6] {
        let mut s = [0; 6];
        for id in &self.test {
            s[self.labels[id].class_id()] += 1;
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let m: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        m.check()?;
        Ok(m)
    }
}

/// Nearest-integer share of `n`, halves rounded up.
pub fn nearest_share(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) + 0.5 + 1e-9).floor() as usize
}

#[derive(Clone, Debug)]
pub struct SplitRequest {
    pub seed: u64,
    pub unlabeled_fraction: f64,
    pub unit: SplitUnit,
}

/// Per-class stratified split: 20% of each class to test, then
/// `unlabeled_fraction` of the remainder has its labels withheld.
pub fn make_splits(recordings: &[Recording], req: &SplitRequest) -> Result<SplitManifest, DatasetError> {
    if recordings.is_empty() {
        return Err(DatasetError::NoUsableData);
    }
    if !(0.0..1.0).contains(&req.unlabeled_fraction) {
        return Err(DatasetError::InvalidSplit(format!(
            "unlabeled fraction {} not in [0, 1)",
            req.unlabeled_fraction
        )));
    }
    let mut rng = stream(req.seed, Stream::Split);
    let mut manifest = SplitManifest {
        train_labeled: Vec::new(),
        train_unlabeled: Vec::new(),
        test: Vec::new(),
        seed: req.seed,
        unlabeled_fraction: req.unlabeled_fraction,
        test_fraction: TEST_FRACTION,
        unit: req.unit,
        labels: recordings.iter().map(|r| (r.id, r.label)).collect(),
        warnings: Vec::new(),
    };

    // groups of recording ids that must land in the same split
    let mut groups: BTreeMap<DiagnosisLabel, BTreeMap<u32, Vec<u32>>> = BTreeMap::new();
    for r in recordings {
        let key = match req.unit {
            SplitUnit::Recording => r.id,
            SplitUnit::Patient => r.patient_id,
        };
        groups.entry(r.label).or_default().entry(key).or_default().push(r.id);
    }

    for (label, members) in groups {
        let mut units: Vec<Vec<u32>> = members.into_values().collect();
        if units.len() < 3 {
            let msg = format!("class {} has only {} split units", label.name(), units.len());
            warn!("{msg}");
            manifest.warnings.push(msg);
        }
        units.shuffle(&mut rng);
        let n_test = nearest_share(units.len(), TEST_FRACTION);
        let rest = units.len() - n_test;
        let n_unlabeled = nearest_share(rest, req.unlabeled_fraction).min(rest);
        for (i, unit) in units.into_iter().enumerate() {
            let dest = if i < n_test {
                &mut manifest.test
            } else if i < n_test + n_unlabeled {
                &mut manifest.train_unlabeled
            } else {
                &mut manifest.train_labeled
            };
            dest.extend(unit);
        }
    }
    manifest.train_labeled.sort_unstable();
    manifest.train_unlabeled.sort_unstable();
    manifest.test.sort_unstable();
    manifest.check()?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// feature cache

const CACHE_MAGIC: &[u8; 4] = b"LSFC";
const CACHE_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheRecord {
    pub id: u32,
    pub class: Option<DiagnosisLabel>,
    pub features: MfccMatrix,
}

/// Sidecar index written next to the cache: the config it was built with
/// and what each record is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheIndex {
    pub config: MfccConfig,
    pub config_hash: String,
    pub recordings: Vec<Recording>,
    pub failures: Vec<CacheFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheFailure {
    pub stem: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub config: MfccConfig,
    pub records: Vec<CacheRecord>,
}

pub fn index_path(cache_path: &Path) -> PathBuf {
    let mut s = cache_path.as_os_str().to_owned();
    s.push(".index.json");
    PathBuf::from(s)
}

impl FeatureCache {
    pub fn get(&self, id: u32) -> Option<&CacheRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serialize; records are written sorted by id, features as f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut records: Vec<&CacheRecord> = self.records.iter().collect();
        records.sort_by_key(|r| r.id);
        let mut out = Vec::new();
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.hash());
        out.extend_from_slice(&(records.len() as u32).to_le_bytes());
        for r in records {
            out.extend_from_slice(&r.id.to_le_bytes());
            let class: i8 = r.class.map_or(-1, |c| c.class_id() as i8);
            out.extend_from_slice(&class.to_le_bytes());
            for &v in r.features.values() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], config: &MfccConfig) -> Result<Self, DatasetError> {
        let corrupt = |m: &str| DatasetError::CorruptCache(m.to_string());
        if bytes.len() < 42 || &bytes[0..4] != CACHE_MAGIC {
            return Err(corrupt("bad magic or truncated header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CACHE_VERSION {
            return Err(DatasetError::CorruptCache(format!("unsupported version {version}")));
        }
        let found = hex::encode(&bytes[6..38]);
        let expected = config.hash_hex();
        if found != expected {
            return Err(DatasetError::ConfigHashMismatch { expected, found });
        }
        let count = u32::from_le_bytes(bytes[38..42].try_into().unwrap()) as usize;
        let (rows, cols) = (config.n_coefficients, config.target_frames);
        let record_len = 4 + 1 + rows * cols * 4;
        if bytes.len() != 42 + count * record_len {
            return Err(DatasetError::CorruptCache(format!(
                "{} bytes for {count} records of {rows}x{cols}",
                bytes.len()
            )));
        }
        let mut records = Vec::with_capacity(count);
        for chunk in bytes[42..].chunks_exact(record_len) {
            let id = u32::from_le_bytes(chunk[0..4].try_into().unwrap());
            let class = match chunk[4] as i8 {
                -1 => None,
                c if (0..6).contains(&c) => DiagnosisLabel::from_class_id(c as usize),
                c => return Err(DatasetError::CorruptCache(format!("class byte {c}"))),
            };
            let values = chunk[5..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            records.push(CacheRecord {
                id,
                class,
                features: MfccMatrix::new(rows, cols, values),
            });
        }
        if records.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(corrupt("record ids not strictly increasing"));
        }
        Ok(Self {
            config: config.clone(),
            records,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    /// Read a cache, rejecting it unless it was built under `config`.
    pub fn read(path: &Path, config: &MfccConfig) -> Result<Self, DatasetError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, config)
    }

    /// Read a cache using the config recorded in its sidecar index.
    pub fn open(path: &Path) -> Result<(Self, CacheIndex), DatasetError> {
        let index: CacheIndex = serde_json::from_str(&fs::read_to_string(index_path(path))?)?;
        let cache = Self::read(path, &index.config)?;
        Ok((cache, index))
    }
}

pub struct CacheBuild {
    pub cache: FeatureCache,
    pub index: CacheIndex,
}

/// Load, resample and featurize every recording in parallel. Failures are
/// logged and listed; output order is by recording id regardless of
/// scheduling. `hide` lists ids whose class is written as the -1 sentinel.
pub fn build_feature_cache(
    recordings: &[Recording],
    paths: &[PathBuf],
    config: &MfccConfig,
    hide: &BTreeSet<u32>,
) -> Result<CacheBuild, DatasetError> {
    let extractor = MfccExtractor::new(config.clone())?;
    let results: Vec<Result<MfccMatrix, String>> = recordings
        .par_iter()
        .zip(paths.par_iter())
        .map(|(_, path)| {
            let clip = audio_io::load_wav(path).map_err(|e: AudioError| e.to_string())?;
            let clip = audio_io::resample(&clip, config.sample_rate);
            extractor.extract(&clip).map_err(|e| e.to_string())
        })
        .collect();

    let mut records = Vec::new();
    let mut kept = Vec::new();
    let mut failures = Vec::new();
    for (rec, res) in recordings.iter().zip(results) {
        match res {
            Ok(mut features) => {
                // stored as f32; round now so the in-memory cache equals the file
                features.values_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
                records.push(CacheRecord {
                    id: rec.id,
                    class: (!hide.contains(&rec.id)).then_some(rec.label),
                    features,
                });
                kept.push(rec.clone());
            }
            Err(error) => {
                warn!("failed to featurize {}: {error}", rec.stem);
                failures.push(CacheFailure {
                    stem: rec.stem.clone(),
                    error,
                });
            }
        }
    }
    records.sort_by_key(|r| r.id);
    kept.sort_by_key(|r| r.id);
    Ok(CacheBuild {
        cache: FeatureCache {
            config: config.clone(),
            records,
        },
        index: CacheIndex {
            config: config.clone(),
            config_hash: config.hash_hex(),
            recordings: kept,
            failures,
        },
    })
}

impl CacheBuild {
    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        self.cache.write(path)?;
        fs::write(index_path(path), serde_json::to_string_pretty(&self.index)?)?;
        Ok(())
    }
}

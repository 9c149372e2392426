use std::collections::BTreeSet;

use lungsound::dataset::{
    build_feature_cache, index_path, load_diagnoses, make_splits, scan_corpus, DatasetError, Recording, SplitRequest,
    SplitUnit,
};
use lungsound::synth::{write_corpus, SynthSpec};
use lungsound::{DiagnosisLabel, FeatureCache, MfccConfig, SplitManifest};

const REFERENCE_COUNTS: [usize; 6] = [16, 13, 793, 35, 37, 23];

fn reference_corpus() -> Vec<Recording> {
    let mut out = Vec::new();
    for (c, &n) in REFERENCE_COUNTS.iter().enumerate() {
        for _ in 0..n {
            let id = out.len() as u32;
            out.push(Recording {
                id,
                stem: format!("{}_1b1_Al_sc_Meditron", 100 + id),
                patient_id: 100 + id,
                label: DiagnosisLabel::ALL[c],
            });
        }
    }
    out
}

fn request(seed: u64) -> SplitRequest {
    SplitRequest {
        seed,
        unlabeled_fraction: 0.5,
        unit: SplitUnit::Recording,
    }
}

fn assert_no_leakage(m: &SplitManifest) {
    let test: BTreeSet<u32> = m.test.iter().copied().collect();
    assert!(m.train_labeled.iter().chain(&m.train_unlabeled).all(|id| !test.contains(id)));
    m.check().unwrap();
}

#[test]
fn reference_counts_give_expected_supports() {
    for seed in 0..5 {
        let m = make_splits(&reference_corpus(), &request(seed)).unwrap();
        assert_eq!(m.test_supports(), [3, 3, 159, 7, 7, 5]);
        assert_eq!(m.test.len(), 184);
        let bronchiectasis_train = m
            .train_labeled
            .iter()
            .chain(&m.train_unlabeled)
            .filter(|id| m.labels[id] == DiagnosisLabel::Bronchiectasis)
            .count();
        assert_eq!(bronchiectasis_train, 13);
        assert_no_leakage(&m);
    }
}

#[test]
fn splits_are_deterministic() {
    let recs = reference_corpus();
    let a = make_splits(&recs, &request(11)).unwrap();
    assert_eq!(a, make_splits(&recs, &request(11)).unwrap());
    assert_ne!(a.test, make_splits(&recs, &request(12)).unwrap().test);
}

#[test]
fn patient_level_split_has_no_leakage() {
    let mut recs = reference_corpus();
    // diagnoses are per patient, so a patient never spans classes
    for r in &mut recs {
        r.patient_id = 1000 * r.label.class_id() as u32 + r.id / 4;
    }
    let m = make_splits(
        &recs,
        &SplitRequest {
            unit: SplitUnit::Patient,
            ..request(2)
        },
    )
    .unwrap();
    assert_no_leakage(&m);
    let patient = |id: &u32| recs[*id as usize].patient_id;
    let test_patients: BTreeSet<u32> = m.test.iter().map(patient).collect();
    assert!(m.train_labeled.iter().chain(&m.train_unlabeled).all(|id| !test_patients.contains(&patient(id))));
}

#[test]
fn manifest_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.json");
    let m = make_splits(&reference_corpus(), &request(4)).unwrap();
    m.save(&path).unwrap();
    assert_eq!(SplitManifest::load(&path).unwrap(), m);

    let mut leaky = m.clone();
    leaky.train_labeled.push(leaky.test[0]);
    leaky.save(&path).unwrap();
    assert!(matches!(SplitManifest::load(&path), Err(DatasetError::InvalidSplit(_))));
}

#[test]
fn corpus_scan_cache_build_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        per_class: 3,
        seconds: 0.5,
        sample_rate: 8000,
        excluded: 2,
        ..SynthSpec::default()
    };
    let synth = write_corpus(dir.path(), &spec).unwrap();
    std::fs::write(synth.audio_dir.join("1000_1b1_Tc_sc_Synth.txt"), "0.0\t0.5\t0\t0\n").unwrap();
    std::fs::write(synth.audio_dir.join("notes.md"), "scratch").unwrap();

    let table = load_diagnoses(&synth.diagnosis_csv).unwrap();
    let corpus = scan_corpus(&synth.audio_dir, &table).unwrap();
    assert_eq!(corpus.recordings.len(), 18);
    assert_eq!(corpus.excluded, 2);
    let ids: Vec<u32> = corpus.recordings.iter().map(|r| r.id).collect();
    assert_eq!(ids, (0..18).collect::<Vec<_>>());

    let cfg = MfccConfig::default().with_clip_seconds(0.5);
    let build = build_feature_cache(&corpus.recordings, &corpus.paths, &cfg, &BTreeSet::from([4])).unwrap();
    assert!(build.index.failures.is_empty());
    assert_eq!(build.index.recordings.len(), 18);
    let path = dir.path().join("features.lsfc");
    build.write(&path).unwrap();
    assert!(index_path(&path).exists());

    let (cache, index) = FeatureCache::open(&path).unwrap();
    assert_eq!(cache, build.cache);
    assert_eq!(index, build.index);
    assert_eq!(cache.len(), 18);
    assert_eq!(cache.get(4).unwrap().class, None);
    assert_eq!(cache.get(5).unwrap().class, Some(corpus.recordings[5].label));
    for r in &cache.records {
        assert_eq!(r.features.shape(), (40, cfg.target_frames));
    }

    let other = MfccConfig {
        hop_length: 256,
        ..cfg.clone()
    };
    assert!(matches!(
        FeatureCache::read(&path, &other),
        Err(DatasetError::ConfigHashMismatch { .. })
    ));
}

#[test]
fn unreadable_audio_is_listed_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        per_class: 1,
        seconds: 0.5,
        sample_rate: 8000,
        excluded: 0,
        ..SynthSpec::default()
    };
    let synth = write_corpus(dir.path(), &spec).unwrap();
    std::fs::write(synth.audio_dir.join("3000_1b1_Tc_sc_Synth.wav"), b"RIFF\0\0\0\0junk").unwrap();
    let corpus = scan_corpus(&synth.audio_dir, &load_diagnoses(&synth.diagnosis_csv).unwrap()).unwrap();
    let cfg = MfccConfig::default().with_clip_seconds(0.5);
    let build = build_feature_cache(&corpus.recordings, &corpus.paths, &cfg, &BTreeSet::new()).unwrap();
    assert_eq!(build.cache.len(), 5);
    assert_eq!(build.index.recordings.len(), 5);
    assert_eq!(build.index.failures.len(), 1);
    assert_eq!(build.index.failures[0].stem, "3000_1b1_Tc_sc_Synth");
}

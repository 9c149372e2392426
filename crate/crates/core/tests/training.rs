mod support;

use lungsound::nn::{AdamConfig, Architecture, ModelParams};
use lungsound::ssl::SslConfig;
use lungsound::training::{
    accuracy, train_baseline, train_semi, Ablation, SplitView, TrainConfig, TrainError, Trainer,
};
use lungsound::MfccMatrix;
use support::synth_features;

fn view<'a>(data: &'a [(MfccMatrix, usize)], labeled_every: usize) -> SplitView<'a> {
    let mut labeled = Vec::new();
    let mut labels = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, (x, y)) in data.iter().enumerate() {
        if i % labeled_every == 0 {
            labeled.push(x);
            labels.push(*y);
        } else {
            unlabeled.push(x);
        }
    }
    SplitView::from_parts(labeled, labels, unlabeled)
}

fn neutral_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 1,
        refit_epochs: 1,
        batch_size: 4,
        ssl: SslConfig::neutralized(),
        seed,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    }
}

fn same_bits(a: &ModelParams, b: &ModelParams) -> bool {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .all(|(x, y)| x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()))
}

#[test]
fn neutralized_semi_epoch_equals_supervised_epoch() {
    let data = synth_features(3, 1.0, 5);
    let v = view(&data, 2);
    let arch = Architecture::for_input(40, 44);
    let cfg = TrainConfig {
        drop: Ablation::Both,
        ..neutral_config(9)
    };

    let mut semi = Trainer::new(&arch, cfg.adam, cfg.seed);
    let w = cfg.ssl.unlabeled_weight_at(0, 1);
    assert_eq!(w, 0.0);
    semi.run_semi_epoch(&v, &cfg, w).unwrap();

    let mut sup = Trainer::new(&arch, cfg.adam, cfg.seed);
    sup.run_supervised_epoch(&v, cfg.batch_size).unwrap();

    assert!(same_bits(&semi.learner.params, &sup.learner.params));
    assert_eq!(semi.learner.adam, sup.learner.adam);

    // a full neutralized epoch is three supervised passes
    let cfg = neutral_config(9);
    let mut semi = Trainer::new(&arch, cfg.adam, cfg.seed);
    semi.run_semi_epoch(&v, &cfg, 0.0).unwrap();
    let mut sup = Trainer::new(&arch, cfg.adam, cfg.seed);
    for _ in 0..3 {
        sup.run_supervised_epoch(&v, cfg.batch_size).unwrap();
    }
    assert!(same_bits(&semi.learner.params, &sup.learner.params));
}

#[test]
fn semi_without_epochs_is_the_baseline() {
    let data = synth_features(3, 1.0, 6);
    let v = view(&data, 2);
    let cfg = TrainConfig {
        epochs: 0,
        refit_epochs: 2,
        ..neutral_config(4)
    };
    let a = train_semi(&cfg, &v).unwrap();
    let b = train_baseline(&cfg, &v).unwrap();
    assert!(same_bits(&a.params, &b.params));
}

#[test]
fn training_is_deterministic() {
    let data = synth_features(4, 1.0, 7);
    let mut v = view(&data, 2);
    v.validation = v.unlabeled[..6].to_vec();
    v.validation_y = (0..6).map(|i| data[2 * i + 1].1).collect();
    let cfg = TrainConfig {
        epochs: 1,
        refit_epochs: 2,
        batch_size: 4,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = train_semi(&cfg, &v).unwrap();
    let b = train_semi(&cfg, &v).unwrap();
    assert!(same_bits(&a.params, &b.params));
    assert_eq!(a.manifest.validation_trace(), b.manifest.validation_trace());
    assert_eq!(a.manifest.validation_trace().len(), 3);
    let c = train_semi(&TrainConfig { seed: 4, ..cfg }, &v).unwrap();
    assert!(!same_bits(&a.params, &c.params));
}

fn memorization_losses(cfg: &TrainConfig) -> Vec<f64> {
    let data = synth_features(2, 1.0, 8);
    let v = SplitView::from_parts(
        data.iter().take(10).map(|(x, _)| x).collect(),
        data.iter().take(10).map(|(_, y)| *y).collect(),
        Vec::new(),
    );
    let out = train_baseline(cfg, &v).unwrap();
    out.manifest.epochs.iter().map(|e| e.passes[0].total_loss).collect()
}

#[test]
fn memorizes_a_small_set() {
    let base = TrainConfig {
        refit_epochs: 200,
        validation_fraction: 0.0,
        seed: 1,
        ..TrainConfig::default()
    };
    let losses = memorization_losses(&base);
    assert!(losses.iter().any(|&l| l < 0.05), "stalled at {}", losses.last().unwrap());

    // without dropout noise and with a gentler step the descent is monotone
    // from the first epoch
    let gentle = TrainConfig {
        dropout_rate: 0.0,
        adam: AdamConfig { lr: 1e-4, ..AdamConfig::default() },
        ..base
    };
    let losses = memorization_losses(&gentle);
    assert!(losses[1] <= losses[0] && losses[2] <= losses[1], "{:?}", &losses[..3]);
    assert!(losses.iter().any(|&l| l < 0.05), "stalled at {}", losses.last().unwrap());
}

#[test]
fn early_stopping_restores_best_epoch() {
    let data = synth_features(6, 1.0, 9);
    let mut v = view(&data, 2);
    // a small validation slice so accuracy plateaus and wobbles
    let val: Vec<usize> = (0..v.unlabeled.len()).step_by(3).collect();
    v.validation = val.iter().map(|&i| v.unlabeled[i]).collect();
    v.validation_y = val.iter().map(|&i| data[2 * (i / 1) + 1].1).collect();
    let cfg = TrainConfig {
        refit_epochs: 12,
        early_stop_patience: 3,
        batch_size: 4,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train_baseline(&cfg, &v).unwrap();
    let trace: Vec<f64> = out.manifest.validation_trace().into_iter().map(Option::unwrap).collect();
    let best = out.manifest.best_refit_epoch.unwrap();
    let top = trace.iter().cloned().fold(f64::MIN, f64::max);
    assert_eq!(trace[best], top);
    assert_eq!(accuracy(&out.params, &v.validation, &v.validation_y).unwrap(), top);

    // retraining for exactly best + 1 epochs reproduces the restored params
    let replay = train_baseline(
        &TrainConfig {
            refit_epochs: best + 1,
            early_stop_patience: 0,
            ..cfg.clone()
        },
        &v,
    )
    .unwrap();
    assert!(same_bits(&out.params, &replay.params));
    if out.manifest.stopped_early {
        assert!(trace.len() < cfg.refit_epochs);
    }
}

#[test]
fn non_finite_loss_is_reported_with_location() {
    let mut data = synth_features(2, 1.0, 10);
    data[3].0.values_mut()[5] = f64::NAN;
    let v = view(&data, 1);
    let cfg = TrainConfig {
        refit_epochs: 2,
        batch_size: 8,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    };
    match train_baseline(&cfg, &v) {
        Err(TrainError::NonFiniteLoss {
            phase, epoch, manifest, ..
        }) => {
            assert_eq!(phase, "refit");
            assert_eq!(epoch, 0);
            let f = manifest.failure.unwrap();
            assert_eq!((f.phase.as_str(), f.epoch), ("refit", 0));
        }
        other => panic!("expected NonFiniteLoss, got {other:?}"),
    }
}

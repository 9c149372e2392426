use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use lungsound::features::MfccExtractor;
use lungsound::nn::{forward_mfcc, init_params, loss_and_backward, predict, LossKind};
use lungsound::rng::{stream, Stream};
use lungsound::synth::{generate_clip, SynthSpec};
use lungsound::{Architecture, MfccConfig, SoftLabel};

fn features(c: &mut Criterion) {
    let spec = SynthSpec {
        seconds: 20.0,
        ..SynthSpec::default()
    };
    let clip = generate_clip(2, 0, &spec);
    let ex = MfccExtractor::new(MfccConfig::default()).unwrap();
    c.bench_function("mfcc 20s clip", |b| b.iter(|| ex.extract(black_box(&clip)).unwrap()));
}

fn network(c: &mut Criterion) {
    let clip = generate_clip(4, 1, &SynthSpec { seconds: 20.0, ..SynthSpec::default() });
    let x = MfccExtractor::new(MfccConfig::default()).unwrap().extract(&clip).unwrap();
    let arch = Architecture::default();
    let params = init_params(&arch, &mut stream(0, Stream::Init));
    let target = SoftLabel::one_hot(4, 6);

    c.bench_function("predict 40x862", |b| b.iter(|| predict(&params, black_box(&x)).unwrap()));
    c.bench_function("forward+backward 40x862", |b| {
        let mut rng = stream(0, Stream::Dropout);
        b.iter(|| {
            let (_, trace) = forward_mfcc(&params, black_box(&x), true, &mut rng).unwrap();
            loss_and_backward(&params, &trace, &target, LossKind::CrossEntropy).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = features, network
}
criterion_main!(benches);

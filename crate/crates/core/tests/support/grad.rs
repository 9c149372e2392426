//! Backprop against central finite differences on a shrunken network.
//!
//! The network is piecewise smooth: a finite-difference stencil that moves a
//! ReLU across zero or changes a max-pool winner does not measure the
//! derivative. Such stencils are detected by comparing the activation
//! pattern at both ends and re-checked with a much smaller step.

#![allow(dead_code)]

use lungsound::nn::{forward, init_params, loss_and_backward, loss_value, Architecture, LossKind, ModelParams, Tensor};
use lungsound::SoftLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
pub const FINE_EPS: f64 = 1e-6;
pub const FINE_TOL: f64 = 1e-5;

pub fn small_arch() -> Architecture {
    // 8x16 -> 7x15 -> 3x7 -> 2x6 -> 1x3
    Architecture {
        input_height: 8,
        input_width: 16,
        channels: vec![3, 4],
        num_classes: 6,
        dropout_rate: 0.0,
    }
}

type Pattern = (Vec<bool>, Vec<u32>);

fn eval(params: &ModelParams, x: &Tensor, y: &SoftLabel, kind: LossKind) -> (f64, Pattern) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (p, trace) = forward(params, x, false, &mut rng).unwrap();
    (loss_value(p.probs(), y.probs(), kind), trace.piecewise_pattern())
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

pub struct Outcome {
    pub checked: usize,
    pub worst_smooth: f64,
    /// Worst error at `EPS` over every parameter, kinks included.
    pub worst_raw: f64,
    pub kinks: usize,
    pub worst_kink_fine: f64,
}

pub fn check(seed: u64, kind: LossKind, target: SoftLabel) -> Outcome {
    let arch = small_arch();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(&arch, &mut rng);
    // nonzero biases so the bias gradients are exercised off the origin
    for t in params.tensors_mut() {
        if t.shape().len() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    let x = Tensor::new(vec![8, 16, 1], (0..128).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

    let (_, trace) = forward(&params, &x, false, &mut rng).unwrap();
    let base_pattern = trace.piecewise_pattern();
    let (_, grads) = loss_and_backward(&params, &trace, &target, kind).unwrap();

    let mut out = Outcome {
        checked: 0,
        worst_smooth: 0.0,
        worst_raw: 0.0,
        kinks: 0,
        worst_kink_fine: 0.0,
    };
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        for i in 0..params.tensors()[ti].len() {
            let analytic = grads.tensors()[ti].data()[i];
            let orig = params.tensors()[ti].data()[i];
            let mut central = |eps: f64| {
                params.tensors_mut()[ti].data_mut()[i] = orig + eps;
                let (up, pu) = eval(&params, &x, &target, kind);
                params.tensors_mut()[ti].data_mut()[i] = orig - eps;
                let (down, pd) = eval(&params, &x, &target, kind);
                params.tensors_mut()[ti].data_mut()[i] = orig;
                ((up - down) / (2.0 * eps), pu == base_pattern && pd == base_pattern)
            };
            let (numeric, smooth) = central(EPS);
            out.checked += 1;
            out.worst_raw = out.worst_raw.max(rel_err(analytic, numeric));
            if smooth {
                out.worst_smooth = out.worst_smooth.max(rel_err(analytic, numeric));
            } else {
                out.kinks += 1;
                let (fine, fine_smooth) = central(FINE_EPS);
                assert!(fine_smooth, "parameter {ti}/{i} sits on a kink");
                out.worst_kink_fine = out.worst_kink_fine.max(rel_err(analytic, fine));
            }
        }
    }
    out
}


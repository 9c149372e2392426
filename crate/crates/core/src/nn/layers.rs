//! Forward and backward kernels for the layer types the classifier uses.
//! Images are `(H, W, C)` tensors with channels innermost; conv kernels are
//! `(2, 2, Cin, Cout)` with output channels innermost.

use rand::Rng;

use super::{NnError, Tensor};

pub const KERNEL: usize = 2;
pub const POOL: usize = 2;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums so the loop vectorizes; order is fixed, so results
    // are reproducible
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

fn check_kernel(kernel: &Tensor, bias: &Tensor, cin: usize) -> Result<usize, NnError> {
    match kernel.shape()[..] {
        [KERNEL, KERNEL, kc, cout] if kc == cin && bias.shape() == [cout] => Ok(cout),
        _ => Err(NnError::ShapeMismatch(format!(
            "kernel {:?} / bias {:?} incompatible with {cin} input channels",
            kernel.shape(),
            bias.shape()
        ))),
    }
}

/// Valid 2x2 cross-correlation with stride 1.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (h, w, cin) = input.hwc()?;
    let cout = check_kernel(kernel, bias, cin)?;
    if h < KERNEL || w < KERNEL {
        return Err(NnError::ShapeMismatch(format!("conv input {h}x{w} smaller than kernel")));
    }
    let (oh, ow) = (h - 1, w - 1);
    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0.0; oh * ow * cout];
    for i in 0..oh {
        for j in 0..ow {
            let o = &mut out[(i * ow + j) * cout..][..cout];
            o.copy_from_slice(bias.data());
            for di in 0..KERNEL {
                for dj in 0..KERNEL {
                    let px = &x[((i + di) * w + j + dj) * cin..][..cin];
                    let taps = &k[(di * KERNEL + dj) * cin * cout..][..cin * cout];
                    for (c, &a) in px.iter().enumerate() {
                        if a != 0.0 {
                            axpy(o, a, &taps[c * cout..][..cout]);
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, cout], out)
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Gradients of [`conv2d`]. The input gradient is skipped when not needed
/// (first layer).
pub fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<ConvGrads, NnError> {
    let (h, w, cin) = input.hwc()?;
    let (oh, ow, cout) = grad_out.hwc()?;
    if oh + 1 != h || ow + 1 != w || kernel.shape() != [KERNEL, KERNEL, cin, cout] {
        return Err(NnError::ShapeMismatch(format!(
            "conv backward: input {:?}, kernel {:?}, grad {:?}",
            input.shape(),
            kernel.shape(),
            grad_out.shape()
        )));
    }
    let x = input.data();
    let k = kernel.data();
    let g = grad_out.data();
    let mut dk = vec![0.0; k.len()];
    let mut db = vec![0.0; cout];
    let mut dx = if need_input_grad { vec![0.0; x.len()] } else { Vec::new() };
    for i in 0..oh {
        for j in 0..ow {
            let gp = &g[(i * ow + j) * cout..][..cout];
            axpy(&mut db, 1.0, gp);
            for di in 0..KERNEL {
                for dj in 0..KERNEL {
                    let base = ((i + di) * w + j + dj) * cin;
                    let tap0 = (di * KERNEL + dj) * cin * cout;
                    for c in 0..cin {
                        let a = x[base + c];
                        let off = tap0 + c * cout;
                        if a != 0.0 {
                            axpy(&mut dk[off..off + cout], a, gp);
                        }
                        if need_input_grad {
                            dx[base + c] += dot(&k[off..off + cout], gp);
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: if need_input_grad {
            Some(Tensor::new(input.shape().to_vec(), dx)?)
        } else {
            None
        },
        kernel: Tensor::new(kernel.shape().to_vec(), dk)?,
        bias: Tensor::new(vec![cout], db)?,
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Gradient through ReLU given its *output*.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &o) in g.data_mut().iter_mut().zip(output.data()) {
        if o <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// 2x2 max pool with stride 2; a trailing odd row or column is dropped.
/// Returns the pooled tensor and, per output element, the flat input index
/// of the winning element (first occurrence on ties).
pub fn maxpool2d(input: &Tensor) -> Result<(Tensor, Vec<u32>), NnError> {
    let (h, w, c) = input.hwc()?;
    if h < POOL || w < POOL {
        return Err(NnError::ShapeMismatch(format!("pool input {h}x{w} smaller than window")));
    }
    let (oh, ow) = (h / POOL, w / POOL);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * i) * w + 2 * j) * c + ch;
                let mut best = x[best_idx];
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * i + di) * w + 2 * j + dj) * c + ch;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx as u32);
            }
        }
    }
    Ok((Tensor::new(vec![oh, ow, c], out)?, argmax))
}

pub fn maxpool2d_backward(grad_out: &Tensor, argmax: &[u32], input_shape: &[usize]) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        d[idx as usize] += g;
    }
    dx
}

pub fn global_avg_pool(input: &Tensor) -> Result<Vec<f64>, NnError> {
    let (h, w, c) = input.hwc()?;
    let mut acc = vec![0.0; c];
    for px in input.data().chunks_exact(c) {
        axpy(&mut acc, 1.0, px);
    }
    let n = (h * w) as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    Ok(acc)
}

pub fn global_avg_pool_backward(grad_out: &[f64], input_shape: &[usize]) -> Tensor {
    let (h, w) = (input_shape[0], input_shape[1]);
    let scale = 1.0 / (h * w) as f64;
    let px: Vec<f64> = grad_out.iter().map(|g| g * scale).collect();
    let data = px.iter().copied().cycle().take(h * w * px.len()).collect();
    Tensor::new(input_shape.to_vec(), data).expect("GAP backward shape")
}

/// `x · W + b` with `W` shaped `(in, out)`.
pub fn dense(x: &[f64], weights: &Tensor, bias: &Tensor) -> Result<Vec<f64>, NnError> {
    let (n_in, n_out) = match weights.shape()[..] {
        [i, o] if i == x.len() && bias.shape() == [o] => (i, o),
        _ => {
            return Err(NnError::ShapeMismatch(format!(
                "dense weights {:?} / bias {:?} for input of {}",
                weights.shape(),
                bias.shape(),
                x.len()
            )))
        }
    };
    let mut out = bias.data().to_vec();
    for (i, &xi) in x.iter().enumerate().take(n_in) {
        axpy(&mut out, xi, &weights.data()[i * n_out..][..n_out]);
    }
    Ok(out)
}

pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(x: &[f64], weights: &Tensor, grad_out: &[f64]) -> DenseGrads {
    let n_out = grad_out.len();
    let w = weights.data();
    let mut dw = vec![0.0; w.len()];
    let mut dx = vec![0.0; x.len()];
    for (i, &xi) in x.iter().enumerate() {
        let row = i * n_out..(i + 1) * n_out;
        axpy(&mut dw[row.clone()], xi, grad_out);
        dx[i] = dot(&w[row], grad_out);
    }
    DenseGrads {
        input: dx,
        weights: Tensor::new(weights.shape().to_vec(), dw).expect("dense grad shape"),
        bias: Tensor::new(vec![n_out], grad_out.to_vec()).expect("dense grad shape"),
    }
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Kept-element mask of an inverted-dropout layer; survivors are scaled by
/// `scale = 1 / (1 - rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

impl DropoutMask {
    pub fn apply(&self, t: &Tensor) -> Tensor {
        let mut out = t.clone();
        for (v, &k) in out.data_mut().iter_mut().zip(&self.keep) {
            *v = if k { *v * self.scale } else { 0.0 };
        }
        out
    }
}

/// Inverted dropout. In inference mode the input is returned untouched and
/// no mask is produced.
pub fn dropout<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> (Tensor, Option<DropoutMask>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} not in [0, 1)");
    if !training {
        return (input.clone(), None);
    }
    let keep: Vec<bool> = if rate == 0.0 {
        vec![true; input.len()]
    } else {
        (0..input.len()).map(|_| rng.random::<f64>() >= rate).collect()
    };
    let mask = DropoutMask {
        keep,
        scale: 1.0 / (1.0 - rate),
    };
    (mask.apply(input), Some(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        t(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    #[test]
    fn conv_full_overlap_sums() {
        let x = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let k = Tensor::filled(&[2, 2, 1, 1], 1.0);
        let out = conv2d(&x, &k, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[10.0]);
    }

    #[test]
    fn conv_identity_kernel_crops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[4, 5, 1], &mut rng);
        let mut k = Tensor::zeros(&[2, 2, 1, 1]);
        k.data_mut()[0] = 1.0;
        let out = conv2d(&x, &k, &Tensor::zeros(&[1])).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(out.data()[i * 4 + j], x.data()[i * 5 + j]);
            }
        }
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = Tensor::zeros(&[3, 3, 2]);
        let k = Tensor::zeros(&[2, 2, 3, 4]);
        assert!(conv2d(&x, &k, &Tensor::zeros(&[4])).is_err());
        let x = Tensor::zeros(&[1, 3, 3]);
        let k = Tensor::zeros(&[2, 2, 3, 4]);
        assert!(conv2d(&x, &k, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn maxpool_basics() {
        let x = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let (out, arg) = maxpool2d(&x).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(arg, vec![3]);

        // odd trailing row/column dropped
        let x = Tensor::zeros(&[5, 3, 2]);
        assert_eq!(maxpool2d(&x).unwrap().0.shape(), &[2, 1, 2]);
    }

    #[test]
    fn maxpool_ties_route_to_first() {
        let x = t(&[2, 2, 1], &[7.0, 7.0, 7.0, 7.0]);
        let (out, arg) = maxpool2d(&x).unwrap();
        let dx = maxpool2d_backward(&t(&[1, 1, 1], &[1.5]), &arg, x.shape());
        assert_eq!(out.data(), &[7.0]);
        assert_eq!(dx.data(), &[1.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gap_of_constant_channel() {
        let x = Tensor::filled(&[3, 4, 2], 2.5);
        assert_eq!(global_avg_pool(&x).unwrap(), vec![2.5, 2.5]);
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let p = softmax(&[0.0; 6]);
        assert!(p.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[4, 4, 3], &mut rng);
        let (y, mask) = dropout(&x, 0.0, &mut rng, true);
        assert_eq!(y, x);
        assert!(mask.unwrap().keep.iter().all(|&k| k));

        let (y, mask) = dropout(&x, 0.2, &mut rng, false);
        assert!(mask.is_none());
        assert!(y.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn dropout_rate_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::filled(&[100, 1000, 1], 1.0);
        let (y, _) = dropout(&x, 0.2, &mut rng, true);
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((0.19..=0.21).contains(&zeros), "zero fraction {zeros}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 1.25));
    }

    #[test]
    fn dense_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = random(&[7, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let y = dense(&x, &w, &b).unwrap();
        for o in 0..3 {
            let want = b.data()[o] + (0..7).map(|i| x[i] * w.data()[i * 3 + o]).sum::<f64>();
            assert!((y[o] - want).abs() < 1e-12);
        }
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, DropoutMask};
use super::{NnError, SoftLabel, Tensor};
use crate::features::MfccMatrix;

/// Network topology: a stack of (2x2 conv, ReLU, 2x2/2 max pool, dropout)
/// blocks, global average pooling and a dense softmax head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_height: usize,
    pub input_width: usize,
    pub channels: Vec<usize>,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl Default for Architecture {
    /// Four blocks of 16/32/64/128 filters over a 40 x 862 MFCC input.
    fn default() -> Self {
        Self::for_input(40, 862)
    }
}

impl Architecture {
    pub fn for_input(height: usize, width: usize) -> Self {
        Self {
            input_height: height,
            input_width: width,
            channels: vec![16, 32, 64, 128],
            num_classes: crate::NUM_CLASSES,
            dropout_rate: 0.2,
        }
    }

    /// Activation shapes, input first, logits last, derived arithmetically.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let (mut h, mut w, mut c) = (self.input_height, self.input_width, 1);
        let mut chain = vec![vec![h, w, c]];
        for (b, &cout) in self.channels.iter().enumerate() {
            if h < 3 || w < 3 {
                return Err(NnError::ShapeMismatch(format!(
                    "{h}x{w} activation too small for block {}",
                    b + 1
                )));
            }
            (h, w, c) = (h - 1, w - 1, cout);
            chain.push(vec![h, w, c]);
            (h, w) = (h / 2, w / 2);
            chain.push(vec![h, w, c]);
        }
        chain.push(vec![c]);
        chain.push(vec![self.num_classes]);
        Ok(chain)
    }

    pub fn param_count(&self) -> usize {
        let mut cin = 1;
        let mut n = 0;
        for &cout in &self.channels {
            n += 4 * cin * cout + cout;
            cin = cout;
        }
        n + cin * self.num_classes + self.num_classes
    }
}

/// Trainable parameters, or a gradient with the same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub conv_kernels: Vec<Tensor>,
    pub conv_biases: Vec<Tensor>,
    pub dense_weights: Tensor,
    pub dense_bias: Tensor,
}

impl ModelParams {
    pub fn zeros(arch: &Architecture) -> Self {
        let mut cin = 1;
        let mut conv_kernels = Vec::new();
        let mut conv_biases = Vec::new();
        for &cout in &arch.channels {
            conv_kernels.push(Tensor::zeros(&[2, 2, cin, cout]));
            conv_biases.push(Tensor::zeros(&[cout]));
            cin = cout;
        }
        Self {
            arch: arch.clone(),
            conv_kernels,
            conv_biases,
            dense_weights: Tensor::zeros(&[cin, arch.num_classes]),
            dense_bias: Tensor::zeros(&[arch.num_classes]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch)
    }

    /// Stable tensor names, in storage order.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.conv_kernels.len() {
            names.push(format!("conv{}.kernel", i + 1));
            names.push(format!("conv{}.bias", i + 1));
        }
        names.push("dense.weights".into());
        names.push("dense.bias".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (k, b) in self.conv_kernels.iter().zip(&self.conv_biases) {
            out.push(k);
            out.push(b);
        }
        out.push(&self.dense_weights);
        out.push(&self.dense_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for (k, b) in self.conv_kernels.iter_mut().zip(self.conv_biases.iter_mut()) {
            out.push(k);
            out.push(b);
        }
        out.push(&mut self.dense_weights);
        out.push(&mut self.dense_bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn same_layout(&self, other: &ModelParams) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape() == y.shape())
    }

    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, scale);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Hash of the exact parameter bits; ties a [`ForwardTrace`] to the
    /// parameters that produced it.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t.data() {
                h = (h ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// He-uniform initialisation, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`;
/// biases start at zero.
pub fn init_params<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> ModelParams {
    let mut p = ModelParams::zeros(arch);
    let fill = |t: &mut Tensor, fan_in: usize, rng: &mut R| {
        let bound = (6.0 / fan_in as f64).sqrt();
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..=bound));
    };
    let mut cin = 1;
    for (k, &cout) in p.conv_kernels.iter_mut().zip(&arch.channels) {
        fill(k, 4 * cin, rng);
        cin = cout;
    }
    fill(&mut p.dense_weights, cin, rng);
    p
}

struct BlockTrace {
    /// Post-ReLU conv output.
    activation: Tensor,
    argmax: Vec<u32>,
    pooled_shape: Vec<usize>,
    mask: Option<DropoutMask>,
    /// Block output (after dropout), input to the next block.
    output: Tensor,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardTrace {
    training: bool,
    fingerprint: u64,
    input: Tensor,
    blocks: Vec<BlockTrace>,
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn training(&self) -> bool {
        self.training
    }

    pub fn has_dropout_masks(&self) -> bool {
        self.blocks.iter().any(|b| b.mask.is_some())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Which ReLUs are active and which max-pool inputs won, per block. Two
    /// inputs with equal patterns lie on the same linear piece of the
    /// network.
    pub fn piecewise_pattern(&self) -> (Vec<bool>, Vec<u32>) {
        let active = self
            .blocks
            .iter()
            .flat_map(|b| b.activation.data().iter().map(|&v| v > 0.0))
            .collect();
        let winners = self.blocks.iter().flat_map(|b| b.argmax.iter().copied()).collect();
        (active, winners)
    }

    /// Shapes of the input, each conv and pool output, the pooled feature
    /// vector and the class scores.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![self.input.shape().to_vec()];
        for b in &self.blocks {
            out.push(b.activation.shape().to_vec());
            out.push(b.pooled_shape.clone());
        }
        out.push(vec![self.pooled.len()]);
        out.push(vec![self.probs.len()]);
        out
    }
}

pub fn mfcc_to_input(x: &MfccMatrix) -> Tensor {
    let (h, w) = x.shape();
    Tensor::new(vec![h, w, 1], x.values().to_vec()).expect("non-empty MFCC matrix")
}

pub fn forward<R: Rng + ?Sized>(
    params: &ModelParams,
    input: &Tensor,
    training: bool,
    rng: &mut R,
) -> Result<(SoftLabel, ForwardTrace), NnError> {
    let arch = &params.arch;
    let expected = [arch.input_height, arch.input_width, 1];
    if input.shape() != expected {
        return Err(NnError::ShapeMismatch(format!(
            "model expects input {expected:?}, got {:?}",
            input.shape()
        )));
    }
    let mut blocks = Vec::with_capacity(params.conv_kernels.len());
    for (k, b) in params.conv_kernels.iter().zip(&params.conv_biases) {
        let x = blocks.last().map_or(input, |t: &BlockTrace| &t.output);
        let activation = layers::relu(&layers::conv2d(x, k, b)?);
        let (pooled, argmax) = layers::maxpool2d(&activation)?;
        let (output, mask) = layers::dropout(&pooled, arch.dropout_rate, rng, training);
        blocks.push(BlockTrace {
            activation,
            argmax,
            pooled_shape: pooled.shape().to_vec(),
            mask,
            output,
        });
    }
    let last = blocks.last().map_or(input, |t| &t.output);
    let pooled = layers::global_avg_pool(last)?;
    let logits = layers::dense(&pooled, &params.dense_weights, &params.dense_bias)?;
    let probs = layers::softmax(&logits);
    let trace = ForwardTrace {
        training,
        fingerprint: params.fingerprint(),
        input: input.clone(),
        blocks,
        pooled,
        probs: probs.clone(),
    };
    Ok((SoftLabel::from_raw(probs), trace))
}

pub fn forward_mfcc<R: Rng + ?Sized>(
    params: &ModelParams,
    x: &MfccMatrix,
    training: bool,
    rng: &mut R,
) -> Result<(SoftLabel, ForwardTrace), NnError> {
    forward(params, &mfcc_to_input(x), training, rng)
}

/// Inference-mode prediction.
pub fn predict(params: &ModelParams, x: &MfccMatrix) -> Result<SoftLabel, NnError> {
    // dropout is off, so the rng is never consulted
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    Ok(forward_mfcc(params, x, false, &mut rng)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    SquaredError,
}

pub const CE_FLOOR: f64 = 1e-12;

pub fn loss_value(probs: &[f64], target: &[f64], kind: LossKind) -> f64 {
    match kind {
        LossKind::CrossEntropy => -probs
            .iter()
            .zip(target)
            .map(|(p, y)| if *y == 0.0 { 0.0 } else { y * p.max(CE_FLOOR).ln() })
            .sum::<f64>(),
        LossKind::SquaredError => probs.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum(),
    }
}

/// d(loss)/d(logits) for softmax outputs `probs`.
pub fn logit_gradient(probs: &[f64], target: &[f64], kind: LossKind) -> Vec<f64> {
    match kind {
        LossKind::CrossEntropy => {
            let mass: f64 = target.iter().sum();
            probs.iter().zip(target).map(|(p, y)| p * mass - y).collect()
        }
        LossKind::SquaredError => {
            let dp: Vec<f64> = probs.iter().zip(target).map(|(p, y)| 2.0 * (p - y)).collect();
            let inner: f64 = dp.iter().zip(probs).map(|(g, p)| g * p).sum();
            probs.iter().zip(&dp).map(|(p, g)| p * (g - inner)).collect()
        }
    }
}

/// Backpropagate a logit gradient through the traced forward pass,
/// replaying its dropout masks.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    grad_logits: &[f64],
) -> Result<ModelParams, NnError> {
    if trace.fingerprint != params.fingerprint() {
        return Err(NnError::StaleTrace);
    }
    let mut grads = params.zeros_like();
    let dense = layers::dense_backward(&trace.pooled, &params.dense_weights, grad_logits);
    grads.dense_weights = dense.weights;
    grads.dense_bias = dense.bias;

    let n_blocks = trace.blocks.len();
    let last_shape = trace
        .blocks
        .last()
        .map_or(trace.input.shape(), |b| b.output.shape())
        .to_vec();
    let mut grad = layers::global_avg_pool_backward(&dense.input, &last_shape);
    for b in (0..n_blocks).rev() {
        let block = &trace.blocks[b];
        if let Some(mask) = &block.mask {
            grad = mask.apply(&grad);
        }
        let grad_act = layers::maxpool2d_backward(&grad, &block.argmax, block.activation.shape());
        let grad_pre = layers::relu_backward(&block.activation, &grad_act);
        let x = if b == 0 { &trace.input } else { &trace.blocks[b - 1].output };
        let conv = layers::conv2d_backward(x, &params.conv_kernels[b], &grad_pre, b > 0)?;
        grads.conv_kernels[b] = conv.kernel;
        grads.conv_biases[b] = conv.bias;
        if let Some(g) = conv.input {
            grad = g;
        }
    }
    Ok(grads)
}

/// Loss of the traced prediction against `target` and its parameter gradient.
pub fn loss_and_backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    target: &SoftLabel,
    kind: LossKind,
) -> Result<(f64, ModelParams), NnError> {
    if target.len() != trace.probs.len() {
        return Err(NnError::ShapeMismatch(format!(
            "target has {} classes, model {}",
            target.len(),
            trace.probs.len()
        )));
    }
    let loss = loss_value(&trace.probs, target.probs(), kind);
    let grads = backward(params, trace, &logit_gradient(&trace.probs, target.probs(), kind))?;
    Ok((loss, grads))
}

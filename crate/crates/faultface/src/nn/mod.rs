//! A minimal dense-array neural engine: enough layers for 28x28
//! generators, discriminators, and classifiers, with hand-derived
//! backward passes and Adam.
//!
//! `forward`/`backward`/`adam_step` are pure: they never mutate their
//! inputs. Batch-norm running statistics produced by a Train-mode
//! forward ride along in the [`Tape`]; the training driver commits them
//! explicitly with [`ParamSet::with_bn_updates`].

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod layers;
pub mod loss;

pub use adam::{adam_step, AdamParams, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::loss_bce;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Convolution kernels are 3x3 everywhere.
pub const KERNEL: usize = 3;
/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
/// Running-statistics momentum: running = M * running + (1-M) * batch.
pub const BN_MOMENTUM: f64 = 0.9;
/// Weight init: Gaussian, mean 0, this standard deviation.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// 3x3 same-padded convolution, stride 1 or 2.
    Conv {
        in_ch: usize,
        out_ch: usize,
        stride: usize,
    },
    /// Fractionally-strided 3x3 convolution: zero-insertion upsample by
    /// 2, then a stride-1 same-padded convolution. Doubles H and W.
    TConv { in_ch: usize, out_ch: usize },
    Dense { input: usize, output: usize },
    BatchNorm { ch: usize },
    Act(Activation),
    /// 2x2 max pooling, stride 2; spatial dims must be even.
    MaxPool,
    Flatten,
    /// Per-sample reshape to the given shape.
    Reshape { shape: Vec<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// An ordered layer stack with its per-sample input shape. Construction
/// shape-checks the whole stack; the per-layer output shapes are fixed
/// from then on.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    /// Per-sample output shape after each layer.
    layer_shapes: Vec<Vec<usize>>,
}

fn conv_out(extent: usize, stride: usize) -> usize {
    extent.div_ceil(stride)
}

fn layer_output_shape(layer: &LayerSpec, input: &[usize], index: usize) -> Result<Vec<usize>> {
    let err = |reason: String| Error::LayerShape {
        layer: index,
        reason,
    };
    match layer {
        LayerSpec::Conv { in_ch, out_ch, stride } => {
            if !matches!(stride, 1 | 2) {
                return Err(err(format!("conv stride must be 1 or 2, got {}", stride)));
            }
            match input {
                [c, h, w] if c == in_ch => Ok(vec![*out_ch, conv_out(*h, *stride), conv_out(*w, *stride)]),
                _ => Err(err(format!(
                    "conv wants [{}, H, W], got {:?}",
                    in_ch, input
                ))),
            }
        }
        LayerSpec::TConv { in_ch, out_ch } => match input {
            [c, h, w] if c == in_ch => Ok(vec![*out_ch, 2 * h, 2 * w]),
            _ => Err(err(format!("tconv wants [{}, H, W], got {:?}", in_ch, input))),
        },
        LayerSpec::Dense { input: fin, output } => match input {
            [f] if f == fin => Ok(vec![*output]),
            _ => Err(err(format!("dense wants [{}], got {:?}", fin, input))),
        },
        LayerSpec::BatchNorm { ch } => {
            if input.first() == Some(ch) {
                Ok(input.to_vec())
            } else {
                Err(err(format!("batchnorm wants leading dim {}, got {:?}", ch, input)))
            }
        }
        LayerSpec::Act(_) => Ok(input.to_vec()),
        LayerSpec::MaxPool => match input {
            [c, h, w] if h % 2 == 0 && w % 2 == 0 => Ok(vec![*c, h / 2, w / 2]),
            _ => Err(err(format!("maxpool wants even [C, H, W], got {:?}", input))),
        },
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Reshape { shape } => {
            let want: usize = shape.iter().product();
            let have: usize = input.iter().product();
            if want == have {
                Ok(shape.clone())
            } else {
                Err(err(format!("reshape {:?} does not fit {:?}", shape, input)))
            }
        }
    }
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            current = layer_output_shape(layer, &current, i)?;
            shapes.push(current.clone());
        }
        Ok(NetworkSpec {
            layers,
            input_shape,
            layer_shapes: shapes,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape of the whole stack.
    pub fn output_shape(&self) -> &[usize] {
        self.layer_shapes
            .last()
            .map(Vec::as_slice)
            .unwrap_or(&self.input_shape)
    }

    /// Per-sample output shape after layer `i`.
    pub fn shape_after(&self, i: usize) -> &[usize] {
        &self.layer_shapes[i]
    }

    /// Cheap structural fingerprint used to pair tapes with the net that
    /// produced them.
    pub fn fingerprint(&self) -> u64 {
        let repr = format!("{:?}|{:?}", self.layers, self.input_shape);
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in repr.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    /// Shapes of the trainable tensors per layer, in checkpoint order.
    pub fn param_shapes(&self) -> Vec<Vec<Vec<usize>>> {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv { in_ch, out_ch, .. } | LayerSpec::TConv { in_ch, out_ch } => vec![
                    vec![*out_ch, *in_ch, KERNEL, KERNEL],
                    vec![*out_ch],
                ],
                LayerSpec::Dense { input, output } => {
                    vec![vec![*input, *output], vec![*output]]
                }
                LayerSpec::BatchNorm { ch } => {
                    vec![vec![*ch], vec![*ch], vec![*ch], vec![*ch]]
                }
                _ => Vec::new(),
            })
            .collect()
    }
}

/// Per-layer trainable parameters (and batch-norm running statistics).
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    None,
    Conv { w: Tensor, b: Tensor },
    Dense { w: Tensor, b: Tensor },
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<LayerParams>,
}

/// Gradients; shapes mirror the trainable tensors of [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub enum LayerGrads {
    None,
    Conv { w: Tensor, b: Tensor },
    Dense { w: Tensor, b: Tensor },
    BatchNorm { gamma: Tensor, beta: Tensor },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradSet {
    pub layers: Vec<LayerGrads>,
}

impl ParamSet {
    /// Gaussian(0, 0.02) weights, zero biases, identity batch-norm.
    pub fn init(net: &NetworkSpec, rng: &mut ChaCha8Rng) -> ParamSet {
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        let layers = net
            .layers()
            .iter()
            .map(|l| match l {
                LayerSpec::Conv { in_ch, out_ch, .. } | LayerSpec::TConv { in_ch, out_ch } => {
                    let n = out_ch * in_ch * KERNEL * KERNEL;
                    let w = Tensor::from_vec(
                        &[*out_ch, *in_ch, KERNEL, KERNEL],
                        (0..n).map(|_| normal.sample(rng)).collect(),
                    )
                    .unwrap();
                    LayerParams::Conv {
                        w,
                        b: Tensor::zeros(&[*out_ch]),
                    }
                }
                LayerSpec::Dense { input, output } => {
                    let w = Tensor::from_vec(
                        &[*input, *output],
                        (0..input * output).map(|_| normal.sample(rng)).collect(),
                    )
                    .unwrap();
                    LayerParams::Dense {
                        w,
                        b: Tensor::zeros(&[*output]),
                    }
                }
                LayerSpec::BatchNorm { ch } => LayerParams::BatchNorm {
                    gamma: Tensor::filled(&[*ch], 1.0),
                    beta: Tensor::zeros(&[*ch]),
                    running_mean: Tensor::zeros(&[*ch]),
                    running_var: Tensor::filled(&[*ch], 1.0),
                },
                _ => LayerParams::None,
            })
            .collect();
        ParamSet { layers }
    }

    /// Flat list of references to the trainable tensors, in a fixed
    /// order shared with [`GradSet::trainable`] and the Adam moments.
    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                    out.push(w);
                    out.push(b);
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                    out.push(w);
                    out.push(b);
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// A copy with the batch-norm running statistics replaced by the
    /// ones a Train-mode forward recorded in `tape`.
    pub fn with_bn_updates(&self, tape: &Tape) -> ParamSet {
        let mut out = self.clone();
        for (i, update) in tape.bn_updates.iter().enumerate() {
            if let Some((mean, var)) = update {
                if let LayerParams::BatchNorm {
                    running_mean,
                    running_var,
                    ..
                } = &mut out.layers[i]
                {
                    *running_mean = mean.clone();
                    *running_var = var.clone();
                }
            }
        }
        out
    }

    /// Check this set against the shapes `net` expects.
    pub fn validate_for(&self, net: &NetworkSpec) -> Result<()> {
        let want = net.param_shapes();
        if want.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "param set has {} layers, net has {}",
                self.layers.len(),
                want.len()
            )));
        }
        for (i, (shapes, layer)) in want.iter().zip(self.layers.iter()).enumerate() {
            let have: Vec<&[usize]> = match layer {
                LayerParams::Conv { w, b } | LayerParams::Dense { w, b } => {
                    vec![w.shape(), b.shape()]
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => vec![gamma.shape(), beta.shape(), running_mean.shape(), running_var.shape()],
                LayerParams::None => Vec::new(),
            };
            if shapes.len() != have.len()
                || shapes.iter().zip(have.iter()).any(|(a, b)| a.as_slice() != *b)
            {
                return Err(Error::LayerShape {
                    layer: i,
                    reason: format!("params want {:?}, got {:?}", shapes, have),
                });
            }
        }
        Ok(())
    }
}

impl GradSet {
    pub fn zeros_like(params: &ParamSet) -> GradSet {
        let layers = params
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Conv { w, b } => LayerGrads::Conv {
                    w: Tensor::zeros(w.shape()),
                    b: Tensor::zeros(b.shape()),
                },
                LayerParams::Dense { w, b } => LayerGrads::Dense {
                    w: Tensor::zeros(w.shape()),
                    b: Tensor::zeros(b.shape()),
                },
                LayerParams::BatchNorm { gamma, beta, .. } => LayerGrads::BatchNorm {
                    gamma: Tensor::zeros(gamma.shape()),
                    beta: Tensor::zeros(beta.shape()),
                },
                LayerParams::None => LayerGrads::None,
            })
            .collect();
        GradSet { layers }
    }

    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerGrads::Conv { w, b } | LayerGrads::Dense { w, b } => {
                    out.push(w);
                    out.push(b);
                }
                LayerGrads::BatchNorm { gamma, beta } => {
                    out.push(gamma);
                    out.push(beta);
                }
                LayerGrads::None => {}
            }
        }
        out
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &GradSet) -> Result<GradSet> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape("grad sets differ in layer count".into()));
        }
        let mut out = self.clone();
        for (mine, theirs) in out.trainable_mut().into_iter().zip(other.trainable()) {
            if mine.shape() != theirs.shape() {
                return Err(Error::Shape("grad sets differ in tensor shapes".into()));
            }
            for (a, b) in mine.data_mut().iter_mut().zip(theirs.data()) {
                *a += b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> GradSet {
        let mut out = self.clone();
        for t in out.trainable_mut() {
            for v in t.data_mut() {
                *v *= s;
            }
        }
        out
    }

    fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                LayerGrads::Conv { w, b } | LayerGrads::Dense { w, b } => {
                    out.push(w);
                    out.push(b);
                }
                LayerGrads::BatchNorm { gamma, beta } => {
                    out.push(gamma);
                    out.push(beta);
                }
                LayerGrads::None => {}
            }
        }
        out
    }
}

/// Cached activations from one forward pass, consumed by [`backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    mode: Mode,
    fingerprint: u64,
    batch: usize,
    /// Input to each layer.
    inputs: Vec<Tensor>,
    extras: Vec<layers::TapeExtra>,
    output_shape: Vec<usize>,
    /// New (running_mean, running_var) per layer index, Train mode only.
    pub bn_updates: Vec<Option<(Tensor, Tensor)>>,
}

impl Tape {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub(crate) fn layer_inputs(&self) -> &[Tensor] {
        &self.inputs
    }
}

/// Run the stack over a batch. `batch` must be shaped
/// `[N, ...input_shape]`. Train mode normalizes with batch statistics
/// and records updated running statistics in the tape; Infer mode uses
/// the stored running statistics.
pub fn forward(
    net: &NetworkSpec,
    params: &ParamSet,
    batch: &Tensor,
    mode: Mode,
) -> Result<(Tensor, Tape)> {
    params.validate_for(net)?;
    let shape = batch.shape();
    if shape.len() != net.input_shape().len() + 1 || &shape[1..] != net.input_shape() {
        return Err(Error::Shape(format!(
            "batch shape {:?} does not extend input shape {:?}",
            shape,
            net.input_shape()
        )));
    }
    let n = shape[0];
    if n == 0 {
        return Err(Error::Empty("forward batch is empty".into()));
    }

    let mut current = batch.clone();
    let mut inputs = Vec::with_capacity(net.layers().len());
    let mut extras = Vec::with_capacity(net.layers().len());
    let mut bn_updates = vec![None; net.layers().len()];

    for (i, layer) in net.layers().iter().enumerate() {
        let (out, extra, bn) = layers::layer_forward(layer, &params.layers[i], &current, mode)
            .map_err(|e| match e {
                Error::Shape(reason) => Error::LayerShape { layer: i, reason },
                other => other,
            })?;
        inputs.push(std::mem::replace(&mut current, out));
        extras.push(extra);
        bn_updates[i] = bn;
    }

    let output_shape = current.shape().to_vec();
    let tape = Tape {
        mode,
        fingerprint: net.fingerprint(),
        batch: n,
        inputs,
        extras,
        output_shape,
        bn_updates,
    };
    Ok((current, tape))
}

/// Backpropagate `output_grad` through a Train-mode tape, producing
/// parameter gradients and the gradient at the input.
pub fn backward(
    net: &NetworkSpec,
    params: &ParamSet,
    tape: &Tape,
    output_grad: &Tensor,
) -> Result<(GradSet, Tensor)> {
    if tape.fingerprint != net.fingerprint() {
        return Err(Error::Shape("tape does not belong to this network".into()));
    }
    if tape.mode != Mode::Train {
        return Err(Error::Shape("backward needs a Train-mode tape".into()));
    }
    if output_grad.shape() != tape.output_shape.as_slice() {
        return Err(Error::Shape(format!(
            "output grad shape {:?} does not match forward output {:?}",
            output_grad.shape(),
            tape.output_shape
        )));
    }

    let mut grads = GradSet::zeros_like(params);
    let mut current = output_grad.clone();
    for i in (0..net.layers().len()).rev() {
        let (layer_grads, input_grad) = layers::layer_backward(
            &net.layers()[i],
            &params.layers[i],
            &tape.inputs[i],
            &tape.extras[i],
            &current,
        )
        .map_err(|e| match e {
            Error::Shape(reason) => Error::LayerShape { layer: i, reason },
            other => other,
        })?;
        grads.layers[i] = layer_grads;
        current = input_grad;
    }
    Ok((grads, current))
}

/// Random batch helper used by tests and the gradient checker.
pub fn random_batch(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    // Keep values away from activation kinks so finite differences stay
    // well-conditioned.
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            v + 0.25 * v.signum()
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

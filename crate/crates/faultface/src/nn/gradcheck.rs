//! Central finite-difference check of the analytic backward pass.
//!
//! The objective is a fixed random projection of the network output,
//! L = sum(output * R); its analytic gradient comes from one backward
//! call with output_grad = R, and the oracle perturbs every trainable
//! scalar (and every input scalar) by +-h and re-runs the forward pass.
//!
//! Two conditioning rules keep the oracle valid:
//!   * errors compare relatively when either gradient is appreciable and
//!     absolutely when both are tiny, the usual tiered FD comparison;
//!   * candidate inputs whose ReLU/LeakyReLU pre-activations or pooling
//!     ties sit within a small margin of a kink are rerolled (the
//!     derivative is not defined there, so finite differences are not an
//!     oracle). Rerolling is deterministic in the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{
    backward, forward, random_batch, Activation, LayerParams, LayerSpec, Mode, NetworkSpec,
    ParamSet, Tape,
};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const PASS_THRESHOLD: f64 = 1e-5;
const MAX_FD_PARAMS: usize = 10_000;
/// Minimum distance of any kink-activation input from its kink.
const KINK_MARGIN: f64 = 3e-4;
const MAX_REROLLS: usize = 200;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// (layer index, layer description, max error) for every layer with
    /// trainable parameters.
    pub per_layer: Vec<(usize, String, f64)>,
    /// Error of the gradient with respect to the network input.
    pub input_err: f64,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self) -> bool {
        self.max_rel_err < PASS_THRESHOLD
    }
}

/// Tiered comparison: relative against the larger magnitude, absolute
/// when both are below 1e-4 (where FD output is dominated by rounding).
fn fd_err(analytic: f64, fd: f64) -> f64 {
    let m = analytic.abs().max(fd.abs());
    if m < 1e-4 {
        (analytic - fd).abs()
    } else {
        (analytic - fd).abs() / m
    }
}

/// Smallest distance from a kink across ReLU/LeakyReLU inputs and
/// max-pool runner-up gaps. Smooth layers impose nothing.
fn kink_margin(net: &NetworkSpec, tape: &Tape) -> f64 {
    let mut margin = f64::INFINITY;
    for (layer, input) in net.layers().iter().zip(tape.layer_inputs()) {
        match layer {
            LayerSpec::Act(Activation::Relu) | LayerSpec::Act(Activation::LeakyRelu(_)) => {
                for v in input.data() {
                    margin = margin.min(v.abs());
                }
            }
            LayerSpec::MaxPool => {
                let [n, c, h, w] = *input.shape() else { continue };
                let data = input.data();
                for nc in 0..n * c {
                    let plane = &data[nc * h * w..(nc + 1) * h * w];
                    for oy in 0..h / 2 {
                        for ox in 0..w / 2 {
                            let vals = [
                                plane[2 * oy * w + 2 * ox],
                                plane[2 * oy * w + 2 * ox + 1],
                                plane[(2 * oy + 1) * w + 2 * ox],
                                plane[(2 * oy + 1) * w + 2 * ox + 1],
                            ];
                            let mut best = f64::NEG_INFINITY;
                            let mut second = f64::NEG_INFINITY;
                            for v in vals {
                                if v > best {
                                    second = best;
                                    best = v;
                                } else if v > second {
                                    second = v;
                                }
                            }
                            margin = margin.min(best - second);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    margin
}

/// FD-conditioned parameters: fan-in-scaled weights and spread biases
/// keep every activation at an informative O(1) scale, so the central
/// differences stay well away from rounding noise and saturation. The
/// math being checked does not depend on the init; the training init is
/// deliberately different (small, per the architecture recipe).
fn fd_params(net: &NetworkSpec, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut params = ParamSet::init(net, rng);
    for (layer, spec) in params.layers.iter_mut().zip(net.layers()) {
        match (layer, spec) {
            (LayerParams::Conv { w, b }, LayerSpec::Conv { in_ch, .. })
            | (LayerParams::Conv { w, b }, LayerSpec::TConv { in_ch, .. }) => {
                let std = (1.5 / ((in_ch * 9) as f64).sqrt()).min(0.5);
                let dist = Normal::new(0.0, std).unwrap();
                for v in w.data_mut() {
                    *v = dist.sample(rng);
                }
                let bias = Normal::new(0.0, 0.2).unwrap();
                for v in b.data_mut() {
                    *v = bias.sample(rng);
                }
            }
            (LayerParams::Dense { w, b }, LayerSpec::Dense { input, .. }) => {
                let std = (1.5 / (*input as f64).sqrt()).min(0.5);
                let dist = Normal::new(0.0, std).unwrap();
                for v in w.data_mut() {
                    *v = dist.sample(rng);
                }
                let bias = Normal::new(0.0, 0.2).unwrap();
                for v in b.data_mut() {
                    *v = bias.sample(rng);
                }
            }
            (LayerParams::BatchNorm { gamma, beta, .. }, _) => {
                let g = Normal::new(1.0, 0.2).unwrap();
                let b = Normal::new(0.0, 0.3).unwrap();
                for v in gamma.data_mut() {
                    *v = g.sample(rng);
                }
                for v in beta.data_mut() {
                    *v = b.sample(rng);
                }
            }
            _ => {}
        }
    }
    params
}

/// Check every trainable parameter and the input gradient of `net`
/// against central finite differences on a seeded random batch. Nets
/// must stay under 10^4 parameters.
pub fn grad_check(net: &NetworkSpec, seed: u64) -> Result<GradCheckReport> {
    grad_check_batch(net, seed, 4)
}

pub fn grad_check_batch(net: &NetworkSpec, seed: u64, batch: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = fd_params(net, &mut rng);
    let n_params = params.parameter_count();
    if n_params >= MAX_FD_PARAMS {
        return Err(Error::Shape(format!(
            "grad_check wants < {} parameters, net has {}",
            MAX_FD_PARAMS, n_params
        )));
    }

    let mut shape = vec![batch];
    shape.extend_from_slice(net.input_shape());

    // Reroll until every kink sits comfortably away from the FD step.
    let mut input = random_batch(&shape, &mut rng);
    let (output, tape) = {
        let mut attempt = 0;
        loop {
            let (out, t) = forward(net, &params, &input, Mode::Train)?;
            if kink_margin(net, &t) >= KINK_MARGIN {
                break (out, t);
            }
            attempt += 1;
            if attempt > MAX_REROLLS {
                return Err(Error::Numeric {
                    iteration: attempt,
                    reason: "could not find a kink-free input for finite differences".into(),
                });
            }
            let mut reroll =
                ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, "fd-reroll", attempt as u64));
            input = random_batch(&shape, &mut reroll);
        }
    };

    let projection = random_batch(output.shape(), &mut rng);
    let (grads, input_grad) = backward(net, &params, &tape, &projection)?;

    let objective = |p: &ParamSet, x: &Tensor| -> Result<f64> {
        let (out, _) = forward(net, p, x, Mode::Train)?;
        Ok(out
            .data()
            .iter()
            .zip(projection.data())
            .map(|(a, b)| a * b)
            .sum())
    };

    let mut per_layer = Vec::new();
    let mut overall: f64 = 0.0;
    for (layer_idx, layer_grads) in grads.layers.iter().enumerate() {
        let tensors: Vec<&Tensor> = match layer_grads {
            crate::nn::LayerGrads::Conv { w, b } | crate::nn::LayerGrads::Dense { w, b } => {
                vec![w, b]
            }
            crate::nn::LayerGrads::BatchNorm { gamma, beta } => vec![gamma, beta],
            crate::nn::LayerGrads::None => continue,
        };
        let mut layer_max: f64 = 0.0;
        for (tensor_idx, g) in tensors.iter().enumerate() {
            for elem in 0..g.len() {
                let mut plus = params.clone();
                perturb(&mut plus, layer_idx, tensor_idx, elem, FD_STEP);
                let mut minus = params.clone();
                perturb(&mut minus, layer_idx, tensor_idx, elem, -FD_STEP);
                let fd = (objective(&plus, &input)? - objective(&minus, &input)?) / (2.0 * FD_STEP);
                layer_max = layer_max.max(fd_err(g.data()[elem], fd));
            }
        }
        overall = overall.max(layer_max);
        per_layer.push((layer_idx, format!("{:?}", net.layers()[layer_idx]), layer_max));
    }

    let mut input_err: f64 = 0.0;
    for elem in 0..input.len() {
        let mut plus = input.clone();
        plus.data_mut()[elem] += FD_STEP;
        let mut minus = input.clone();
        minus.data_mut()[elem] -= FD_STEP;
        let fd = (objective(&params, &plus)? - objective(&params, &minus)?) / (2.0 * FD_STEP);
        input_err = input_err.max(fd_err(input_grad.data()[elem], fd));
    }
    overall = overall.max(input_err);

    Ok(GradCheckReport {
        per_layer,
        input_err,
        max_rel_err: overall,
    })
}

fn perturb(params: &mut ParamSet, layer: usize, tensor_idx: usize, elem: usize, delta: f64) {
    use crate::nn::LayerParams;
    let t = match (&mut params.layers[layer], tensor_idx) {
        (LayerParams::Conv { w, .. }, 0) | (LayerParams::Dense { w, .. }, 0) => w,
        (LayerParams::Conv { b, .. }, 1) | (LayerParams::Dense { b, .. }, 1) => b,
        (LayerParams::BatchNorm { gamma, .. }, 0) => gamma,
        (LayerParams::BatchNorm { beta, .. }, 1) => beta,
        _ => unreachable!("trainable tensor index out of range"),
    };
    t.data_mut()[elem] += delta;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_activation_layer_is_tight() {
        let net = NetworkSpec::new(vec![6], vec![LayerSpec::Act(Activation::Tanh)]).unwrap();
        let report = grad_check(&net, 42).unwrap();
        assert!(report.per_layer.is_empty());
        assert!(report.input_err < 1e-8, "report {:?}", report);
    }

    #[test]
    fn conv_bn_leaky_stack_passes() {
        let net = NetworkSpec::new(
            vec![2, 6, 6],
            vec![
                LayerSpec::Conv {
                    in_ch: 2,
                    out_ch: 3,
                    stride: 2,
                },
                LayerSpec::BatchNorm { ch: 3 },
                LayerSpec::Act(Activation::LeakyRelu(0.2)),
            ],
        )
        .unwrap();
        let report = grad_check(&net, 7).unwrap();
        assert!(report.passes(), "report {:?}", report);
    }

    #[test]
    fn deterministic_given_seed() {
        let net = NetworkSpec::new(
            vec![3],
            vec![
                LayerSpec::Dense { input: 3, output: 3 },
                LayerSpec::Act(Activation::Sigmoid),
            ],
        )
        .unwrap();
        let a = grad_check(&net, 9).unwrap();
        let b = grad_check(&net, 9).unwrap();
        assert_eq!(a.max_rel_err, b.max_rel_err);
        assert_eq!(a.per_layer.len(), b.per_layer.len());
    }

    #[test]
    fn refuses_oversized_nets() {
        let net = NetworkSpec::new(
            vec![200],
            vec![LayerSpec::Dense {
                input: 200,
                output: 200,
            }],
        )
        .unwrap();
        assert!(grad_check(&net, 1).is_err());
    }
}

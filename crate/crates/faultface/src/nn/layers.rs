//! Per-layer forward/backward kernels. Convolutions go through im2col
//! plus the shared matrix product; the patch matrix is recomputed in the
//! backward pass instead of cached, trading a little compute for a tape
//! that only holds layer inputs.

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerGrads, LayerParams, LayerSpec, Mode, BN_EPS, BN_MOMENTUM, KERNEL};
use crate::par;
use crate::tensor::{matmul, matmul_at_b, Tensor};

#[derive(Clone, Debug)]
pub enum TapeExtra {
    None,
    BatchNorm {
        x_hat: Tensor,
        var: Tensor,
    },
    MaxPool {
        /// Flat input index of the winning element per output element.
        argmax: Vec<usize>,
    },
}

/// TF-style same padding: left/top gets the smaller half.
fn same_pad(extent: usize, stride: usize) -> (usize, usize) {
    let out = extent.div_ceil(stride);
    let total = ((out - 1) * stride + KERNEL).saturating_sub(extent);
    (total / 2, total - total / 2)
}

struct ConvGeom {
    n: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
    stride: usize,
}

impl ConvGeom {
    fn from(input: &Tensor, in_ch: usize, stride: usize) -> Result<ConvGeom> {
        match *input.shape() {
            [n, c, h, w] if c == in_ch => {
                let (pad_top, _) = same_pad(h, stride);
                let (pad_left, _) = same_pad(w, stride);
                Ok(ConvGeom {
                    n,
                    in_ch,
                    h,
                    w,
                    out_h: h.div_ceil(stride),
                    out_w: w.div_ceil(stride),
                    pad_top,
                    pad_left,
                    stride,
                })
            }
            _ => Err(Error::Shape(format!(
                "conv input wants [N, {}, H, W], got {:?}",
                in_ch,
                input.shape()
            ))),
        }
    }

    fn patch_cols(&self) -> usize {
        self.in_ch * KERNEL * KERNEL
    }

    fn rows_per_sample(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Gather 3x3 patches into a (N*OH*OW) x (C*9) matrix, zero padding
/// outside the image. Sample-parallel: each sample owns a disjoint row
/// block.
fn im2col(input: &Tensor, g: &ConvGeom) -> Vec<f64> {
    let cols = g.patch_cols();
    let rows_per = g.rows_per_sample();
    let mut patches = vec![0.0; g.n * rows_per * cols];
    let data = input.data();
    let sample_len = g.in_ch * g.h * g.w;
    par::chunks_mut(&mut patches, rows_per * cols, |n, block| {
        let sample = &data[n * sample_len..(n + 1) * sample_len];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = (oy * g.out_w + ox) * cols;
                for c in 0..g.in_ch {
                    let plane = &sample[c * g.h * g.w..(c + 1) * g.h * g.w];
                    for ky in 0..KERNEL {
                        let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kx in 0..KERNEL {
                            let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            block[row + c * 9 + ky * KERNEL + kx] =
                                plane[iy as usize * g.w + ix as usize];
                        }
                    }
                }
            }
        }
    });
    patches
}

/// Scatter-add patch gradients back onto the input. Sample-parallel.
fn col2im(dpatches: &[f64], g: &ConvGeom) -> Tensor {
    let cols = g.patch_cols();
    let rows_per = g.rows_per_sample();
    let mut dinput = Tensor::zeros(&[g.n, g.in_ch, g.h, g.w]);
    let sample_len = g.in_ch * g.h * g.w;
    let (h, w) = (g.h, g.w);
    let (stride, pad_top, pad_left) = (g.stride, g.pad_top, g.pad_left);
    let (out_h, out_w, in_ch) = (g.out_h, g.out_w, g.in_ch);
    par::chunks_mut(dinput.data_mut(), sample_len, |n, sample| {
        let block = &dpatches[n * rows_per * cols..(n + 1) * rows_per * cols];
        for oy in 0..out_h {
            for ox in 0..out_w {
                let row = (oy * out_w + ox) * cols;
                for c in 0..in_ch {
                    for ky in 0..KERNEL {
                        let iy = (oy * stride + ky) as isize - pad_top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..KERNEL {
                            let ix = (ox * stride + kx) as isize - pad_left as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            sample[c * h * w + iy as usize * w + ix as usize] +=
                                block[row + c * 9 + ky * KERNEL + kx];
                        }
                    }
                }
            }
        }
    });
    dinput
}

/// patches (rows x cols) times w^T, as out = patches * w2 where
/// w2[cols][out_ch] is the reshaped kernel bank.
fn conv_apply(patches: &[f64], w: &Tensor, b: &Tensor, g: &ConvGeom, out_ch: usize) -> Tensor {
    let cols = g.patch_cols();
    let rows = g.n * g.rows_per_sample();
    let mut w2 = vec![0.0; cols * out_ch];
    let wd = w.data();
    for o in 0..out_ch {
        for k in 0..cols {
            w2[k * out_ch + o] = wd[o * cols + k];
        }
    }
    let mut flat = vec![0.0; rows * out_ch];
    matmul(patches, &w2, rows, cols, out_ch, &mut flat);

    // (N*OH*OW, O) -> (N, O, OH, OW) with bias
    let rows_per = g.rows_per_sample();
    let mut out = Tensor::zeros(&[g.n, out_ch, g.out_h, g.out_w]);
    let od = out.data_mut();
    let bd = b.data();
    for n in 0..g.n {
        for o in 0..out_ch {
            let dst = (n * out_ch + o) * rows_per;
            for r in 0..rows_per {
                od[dst + r] = flat[(n * rows_per + r) * out_ch + o] + bd[o];
            }
        }
    }
    out
}

fn conv_forward(input: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
    let (out_ch, in_ch) = (w.shape()[0], w.shape()[1]);
    let g = ConvGeom::from(input, in_ch, stride)?;
    let patches = im2col(input, &g);
    Ok(conv_apply(&patches, w, b, &g, out_ch))
}

fn conv_backward(
    input: &Tensor,
    w: &Tensor,
    dout: &Tensor,
    stride: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (out_ch, in_ch) = (w.shape()[0], w.shape()[1]);
    let g = ConvGeom::from(input, in_ch, stride)?;
    let rows_per = g.rows_per_sample();
    let rows = g.n * rows_per;
    let cols = g.patch_cols();

    // (N, O, OH, OW) -> (N*OH*OW, O)
    let mut dout_mat = vec![0.0; rows * out_ch];
    let dd = dout.data();
    for n in 0..g.n {
        for o in 0..out_ch {
            let src = (n * out_ch + o) * rows_per;
            for r in 0..rows_per {
                dout_mat[(n * rows_per + r) * out_ch + o] = dd[src + r];
            }
        }
    }

    let mut db = Tensor::zeros(&[out_ch]);
    {
        let dbd = db.data_mut();
        for r in 0..rows {
            for o in 0..out_ch {
                dbd[o] += dout_mat[r * out_ch + o];
            }
        }
    }

    let patches = im2col(input, &g);
    // dW (O, cols) = dout_mat^T (O, rows) * patches (rows, cols)
    let mut dw_flat = vec![0.0; out_ch * cols];
    matmul_at_b(&dout_mat, &patches, rows, out_ch, cols, &mut dw_flat);
    let dw = Tensor::from_vec(w.shape(), dw_flat)?;

    // dPatches (rows, cols) = dout_mat (rows, O) * w_reshaped (O, cols)
    let mut dpatches = vec![0.0; rows * cols];
    matmul(&dout_mat, w.data(), rows, out_ch, cols, &mut dpatches);
    let dinput = col2im(&dpatches, &g);
    Ok((dw, db, dinput))
}

/// Zero-insertion upsample by 2: (N,C,H,W) -> (N,C,2H,2W) with the
/// original values at even coordinates.
fn upsample2(input: &Tensor) -> Tensor {
    let [n, c, h, w] = *input.shape() else {
        unreachable!("tconv input already shape-checked")
    };
    let mut up = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
    let src = input.data();
    let dst = up.data_mut();
    for nc in 0..n * c {
        let s = &src[nc * h * w..(nc + 1) * h * w];
        let d = &mut dst[nc * 4 * h * w..(nc + 1) * 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                d[(2 * y) * 2 * w + 2 * x] = s[y * w + x];
            }
        }
    }
    up
}

fn downsample2(dup: &Tensor) -> Tensor {
    let [n, c, h2, w2] = *dup.shape() else {
        unreachable!()
    };
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor::zeros(&[n, c, h, w]);
    let src = dup.data();
    let dst = out.data_mut();
    for nc in 0..n * c {
        let s = &src[nc * h2 * w2..(nc + 1) * h2 * w2];
        let d = &mut dst[nc * h * w..(nc + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                d[y * w + x] = s[(2 * y) * w2 + 2 * x];
            }
        }
    }
    out
}

fn dense_forward(input: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [n, fin] = *input.shape() else {
        return Err(Error::Shape(format!(
            "dense input wants [N, F], got {:?}",
            input.shape()
        )));
    };
    let [wf, wo] = *w.shape() else {
        return Err(Error::Shape("dense weights want [in, out]".into()));
    };
    if wf != fin {
        return Err(Error::Shape(format!(
            "dense input width {} does not match weights {}",
            fin, wf
        )));
    }
    let mut out = Tensor::zeros(&[n, wo]);
    matmul(input.data(), w.data(), n, fin, wo, out.data_mut());
    let od = out.data_mut();
    let bd = b.data();
    for r in 0..n {
        for o in 0..wo {
            od[r * wo + o] += bd[o];
        }
    }
    Ok(out)
}

fn dense_backward(input: &Tensor, w: &Tensor, dout: &Tensor) -> (Tensor, Tensor, Tensor) {
    let [n, fin] = *input.shape() else { unreachable!() };
    let [_, fout] = *w.shape() else { unreachable!() };

    let mut dw = Tensor::zeros(w.shape());
    matmul_at_b(input.data(), dout.data(), n, fin, fout, dw.data_mut());

    let mut db = Tensor::zeros(&[fout]);
    let dbd = db.data_mut();
    for r in 0..n {
        for o in 0..fout {
            dbd[o] += dout.data()[r * fout + o];
        }
    }

    // dIn = dout (N,fout) * w^T (fout,fin)
    let mut wt = vec![0.0; fout * fin];
    for i in 0..fin {
        for o in 0..fout {
            wt[o * fin + i] = w.data()[i * fout + o];
        }
    }
    let mut din = Tensor::zeros(input.shape());
    matmul(dout.data(), &wt, n, fout, fin, din.data_mut());
    (dw, db, din)
}

/// Channel geometry for batch norm: works for (N,C) and (N,C,spatial...).
fn bn_geometry(input: &Tensor, ch: usize) -> Result<(usize, usize)> {
    let shape = input.shape();
    if shape.len() < 2 || shape[1] != ch {
        return Err(Error::Shape(format!(
            "batchnorm wants [N, {}, ...], got {:?}",
            ch, shape
        )));
    }
    let spatial: usize = shape[2..].iter().product();
    Ok((shape[0], spatial))
}

#[allow(clippy::too_many_arguments)]
fn bn_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    mode: Mode,
) -> Result<(Tensor, TapeExtra, Option<(Tensor, Tensor)>)> {
    let ch = gamma.len();
    let (n, spatial) = bn_geometry(input, ch)?;
    let m = (n * spatial) as f64;
    let data = input.data();
    let sample_len = ch * spatial;

    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; ch];
            let mut var = vec![0.0; ch];
            for c in 0..ch {
                let mut acc = 0.0;
                for s in 0..n {
                    let base = s * sample_len + c * spatial;
                    for v in &data[base..base + spatial] {
                        acc += v;
                    }
                }
                mean[c] = acc / m;
                let mut acc2 = 0.0;
                for s in 0..n {
                    let base = s * sample_len + c * spatial;
                    for v in &data[base..base + spatial] {
                        let d = v - mean[c];
                        acc2 += d * d;
                    }
                }
                var[c] = acc2 / m;
            }
            (mean, var)
        }
        Mode::Infer => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };

    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    {
        let xh = x_hat.data_mut();
        let od = out.data_mut();
        let gd = gamma.data();
        let bd = beta.data();
        for s in 0..n {
            for c in 0..ch {
                let inv = 1.0 / (var[c] + BN_EPS).sqrt();
                let base = s * sample_len + c * spatial;
                for i in base..base + spatial {
                    let h = (data[i] - mean[c]) * inv;
                    xh[i] = h;
                    od[i] = gd[c] * h + bd[c];
                }
            }
        }
    }

    let updates = match mode {
        Mode::Train => {
            let new_mean: Vec<f64> = running_mean
                .data()
                .iter()
                .zip(mean.iter())
                .map(|(r, b)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * b)
                .collect();
            let new_var: Vec<f64> = running_var
                .data()
                .iter()
                .zip(var.iter())
                .map(|(r, b)| BN_MOMENTUM * r + (1.0 - BN_MOMENTUM) * b)
                .collect();
            Some((
                Tensor::from_vec(&[ch], new_mean)?,
                Tensor::from_vec(&[ch], new_var)?,
            ))
        }
        Mode::Infer => None,
    };

    let extra = TapeExtra::BatchNorm {
        x_hat,
        var: Tensor::from_vec(&[ch], var)?,
    };
    Ok((out, extra, updates))
}

fn bn_backward(
    input: &Tensor,
    gamma: &Tensor,
    x_hat: &Tensor,
    var: &Tensor,
    dout: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let ch = gamma.len();
    let (n, spatial) = bn_geometry(input, ch).expect("shape checked in forward");
    let m = (n * spatial) as f64;
    let sample_len = ch * spatial;

    let mut dgamma = Tensor::zeros(&[ch]);
    let mut dbeta = Tensor::zeros(&[ch]);
    let mut din = Tensor::zeros(input.shape());

    let dd = dout.data();
    let xh = x_hat.data();
    for c in 0..ch {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for s in 0..n {
            let base = s * sample_len + c * spatial;
            for i in base..base + spatial {
                sum_dy += dd[i];
                sum_dy_xhat += dd[i] * xh[i];
            }
        }
        dgamma.data_mut()[c] = sum_dy_xhat;
        dbeta.data_mut()[c] = sum_dy;

        let inv = 1.0 / (var.data()[c] + BN_EPS).sqrt();
        let scale = gamma.data()[c] * inv;
        let mean_dy = sum_dy / m;
        let mean_dy_xhat = sum_dy_xhat / m;
        let dind = din.data_mut();
        for s in 0..n {
            let base = s * sample_len + c * spatial;
            for i in base..base + spatial {
                dind[i] = scale * (dd[i] - mean_dy - xh[i] * mean_dy_xhat);
            }
        }
    }
    (dgamma, dbeta, din)
}

fn act_forward(act: Activation, input: &Tensor) -> Tensor {
    match act {
        Activation::Relu => input.map(|v| v.max(0.0)),
        Activation::LeakyRelu(alpha) => input.map(|v| if v > 0.0 { v } else { alpha * v }),
        Activation::Tanh => input.map(f64::tanh),
        Activation::Sigmoid => input.map(|v| 1.0 / (1.0 + (-v).exp())),
    }
}

fn act_backward(act: Activation, input: &Tensor, dout: &Tensor) -> Tensor {
    let mut din = Tensor::zeros(input.shape());
    let xs = input.data();
    let ds = dout.data();
    let out = din.data_mut();
    match act {
        Activation::Relu => {
            for i in 0..xs.len() {
                out[i] = if xs[i] > 0.0 { ds[i] } else { 0.0 };
            }
        }
        Activation::LeakyRelu(alpha) => {
            for i in 0..xs.len() {
                out[i] = if xs[i] > 0.0 { ds[i] } else { alpha * ds[i] };
            }
        }
        Activation::Tanh => {
            for i in 0..xs.len() {
                let y = xs[i].tanh();
                out[i] = ds[i] * (1.0 - y * y);
            }
        }
        Activation::Sigmoid => {
            for i in 0..xs.len() {
                let y = 1.0 / (1.0 + (-xs[i]).exp());
                out[i] = ds[i] * y * (1.0 - y);
            }
        }
    }
    din
}

fn maxpool_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = *input.shape() else {
        return Err(Error::Shape(format!(
            "maxpool wants [N, C, H, W], got {:?}",
            input.shape()
        )));
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("maxpool wants even spatial dims, got {}x{}", h, w)));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let src = input.data();
    let dst = out.data_mut();
    for nc in 0..n * c {
        let plane = nc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = plane + (2 * oy) * w + 2 * ox;
                let mut best = src[best_idx];
                for (ky, kx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = plane + (2 * oy + ky) * w + 2 * ox + kx;
                    if src[idx] > best {
                        best = src[idx];
                        best_idx = idx;
                    }
                }
                let o = nc * oh * ow + oy * ow + ox;
                dst[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

fn maxpool_backward(input: &Tensor, argmax: &[usize], dout: &Tensor) -> Tensor {
    let mut din = Tensor::zeros(input.shape());
    let dd = dout.data();
    let out = din.data_mut();
    for (o, &src_idx) in argmax.iter().enumerate() {
        out[src_idx] += dd[o];
    }
    din
}

fn with_batch(shape: &[usize], n: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(shape.len() + 1);
    s.push(n);
    s.extend_from_slice(shape);
    s
}

pub fn layer_forward(
    layer: &LayerSpec,
    params: &LayerParams,
    input: &Tensor,
    mode: Mode,
) -> Result<(Tensor, TapeExtra, Option<(Tensor, Tensor)>)> {
    match (layer, params) {
        (LayerSpec::Conv { stride, .. }, LayerParams::Conv { w, b }) => {
            Ok((conv_forward(input, w, b, *stride)?, TapeExtra::None, None))
        }
        (LayerSpec::TConv { .. }, LayerParams::Conv { w, b }) => {
            let up = upsample2(input);
            Ok((conv_forward(&up, w, b, 1)?, TapeExtra::None, None))
        }
        (LayerSpec::Dense { .. }, LayerParams::Dense { w, b }) => {
            Ok((dense_forward(input, w, b)?, TapeExtra::None, None))
        }
        (
            LayerSpec::BatchNorm { .. },
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            },
        ) => bn_forward(input, gamma, beta, running_mean, running_var, mode),
        (LayerSpec::Act(a), LayerParams::None) => Ok((act_forward(*a, input), TapeExtra::None, None)),
        (LayerSpec::MaxPool, LayerParams::None) => {
            let (out, argmax) = maxpool_forward(input)?;
            Ok((out, TapeExtra::MaxPool { argmax }, None))
        }
        (LayerSpec::Flatten, LayerParams::None) => {
            let n = input.shape()[0];
            let f: usize = input.shape()[1..].iter().product();
            Ok((input.reshaped(&[n, f])?, TapeExtra::None, None))
        }
        (LayerSpec::Reshape { shape }, LayerParams::None) => {
            let n = input.shape()[0];
            Ok((input.reshaped(&with_batch(shape, n))?, TapeExtra::None, None))
        }
        _ => Err(Error::Shape("layer/params kind mismatch".into())),
    }
}

pub fn layer_backward(
    layer: &LayerSpec,
    params: &LayerParams,
    input: &Tensor,
    extra: &TapeExtra,
    dout: &Tensor,
) -> Result<(LayerGrads, Tensor)> {
    match (layer, params, extra) {
        (LayerSpec::Conv { stride, .. }, LayerParams::Conv { w, .. }, TapeExtra::None) => {
            let (dw, db, din) = conv_backward(input, w, dout, *stride)?;
            Ok((LayerGrads::Conv { w: dw, b: db }, din))
        }
        (LayerSpec::TConv { .. }, LayerParams::Conv { w, .. }, TapeExtra::None) => {
            let up = upsample2(input);
            let (dw, db, dup) = conv_backward(&up, w, dout, 1)?;
            Ok((LayerGrads::Conv { w: dw, b: db }, downsample2(&dup)))
        }
        (LayerSpec::Dense { .. }, LayerParams::Dense { w, .. }, TapeExtra::None) => {
            let (dw, db, din) = dense_backward(input, w, dout);
            Ok((LayerGrads::Dense { w: dw, b: db }, din))
        }
        (
            LayerSpec::BatchNorm { .. },
            LayerParams::BatchNorm { gamma, .. },
            TapeExtra::BatchNorm { x_hat, var },
        ) => {
            let (dgamma, dbeta, din) = bn_backward(input, gamma, x_hat, var, dout);
            Ok((
                LayerGrads::BatchNorm {
                    gamma: dgamma,
                    beta: dbeta,
                },
                din,
            ))
        }
        (LayerSpec::Act(a), LayerParams::None, TapeExtra::None) => {
            Ok((LayerGrads::None, act_backward(*a, input, dout)))
        }
        (LayerSpec::MaxPool, LayerParams::None, TapeExtra::MaxPool { argmax }) => {
            Ok((LayerGrads::None, maxpool_backward(input, argmax, dout)))
        }
        (LayerSpec::Flatten, LayerParams::None, TapeExtra::None)
        | (LayerSpec::Reshape { .. }, LayerParams::None, TapeExtra::None) => {
            Ok((LayerGrads::None, dout.reshaped(input.shape())?))
        }
        _ => Err(Error::Shape("stale or mismatched tape entry".into())),
    }
}

//! Forward and backward compute kernels.
//!
//! Kernels are pure functions over tensors; shape validation happens in the
//! graph layer. Batch items (and for weight gradients, output channels) are
//! independent, so those loops go through the [`parallel`](crate::parallel)
//! helpers. Per-element accumulation order never depends on the thread
//! count, keeping results bit-identical across parallel and sequential
//! builds.

use crate::parallel::{par_chunks_mut, par_range};
#[cfg(feature = "parallel")]
use crate::parallel::ParallelIterator;

use super::scalar::Scalar;
use super::tensor::Tensor;

pub(crate) fn conv1d_out_len(l_in: usize, k: usize, stride: usize, padding: usize) -> usize {
    (l_in + 2 * padding - k) / stride + 1
}

/// Valid output range `[lo, hi)` for kernel tap `k`: indices where
/// `l*stride + k - padding` stays inside `[0, l_in)`.
fn tap_range(l_in: usize, l_out: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if k >= padding {
        0
    } else {
        (padding - k).div_ceil(stride)
    };
    let hi = if l_in + padding > k {
        ((l_in + padding - k - 1) / stride + 1).min(l_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Cross-correlation over `[B, Cin, L]` with weight `[Cout, Cin/groups, K]`.
pub(crate) fn conv1d_fwd<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Tensor<T> {
    let (b, c_in, l_in) = x.dims3().unwrap();
    let c_out = w.shape()[0];
    let cig = w.shape()[1];
    let k = w.shape()[2];
    let l_out = conv1d_out_len(l_in, k, stride, padding);
    let cog = c_out / groups;

    let mut out = Tensor::zeros(&[b, c_out, l_out]);
    let xd = x.data();
    let wd = w.data();
    par_chunks_mut(out.data_mut(), c_out * l_out)
        .enumerate()
        .for_each(|(bi, ob)| {
            for co in 0..c_out {
                let g = co / cog;
                let orow = &mut ob[co * l_out..(co + 1) * l_out];
                if let Some(bias) = bias {
                    orow.fill(bias.data()[co]);
                }
                for cil in 0..cig {
                    let ci = g * cig + cil;
                    let xrow = &xd[(bi * c_in + ci) * l_in..(bi * c_in + ci + 1) * l_in];
                    let wrow = &wd[(co * cig + cil) * k..(co * cig + cil + 1) * k];
                    for (ki, &wv) in wrow.iter().enumerate() {
                        let (lo, hi) = tap_range(l_in, l_out, ki, stride, padding);
                        if stride == 1 {
                            let xoff = lo + ki - padding;
                            for (o, &xv) in orow[lo..hi].iter_mut().zip(&xrow[xoff..xoff + hi - lo])
                            {
                                *o += wv * xv;
                            }
                        } else {
                            for l in lo..hi {
                                orow[l] += wv * xrow[l * stride + ki - padding];
                            }
                        }
                    }
                }
            }
        });
    out
}

/// Gradient w.r.t. the conv input.
pub(crate) fn conv1d_bwd_x<T: Scalar>(
    gy: &Tensor<T>,
    w: &Tensor<T>,
    x_shape: &[usize],
    stride: usize,
    padding: usize,
    groups: usize,
) -> Tensor<T> {
    let (_, c_in, l_in) = (x_shape[0], x_shape[1], x_shape[2]);
    let (_, c_out, l_out) = gy.dims3().unwrap();
    let cig = w.shape()[1];
    let k = w.shape()[2];
    let cog = c_out / groups;

    let mut gx = Tensor::zeros(x_shape);
    let gyd = gy.data();
    let wd = w.data();
    par_chunks_mut(gx.data_mut(), c_in * l_in)
        .enumerate()
        .for_each(|(bi, gxb)| {
            for co in 0..c_out {
                let g = co / cog;
                let gyrow = &gyd[(bi * c_out + co) * l_out..(bi * c_out + co + 1) * l_out];
                for cil in 0..cig {
                    let ci = g * cig + cil;
                    let gxrow = &mut gxb[ci * l_in..(ci + 1) * l_in];
                    let wrow = &wd[(co * cig + cil) * k..(co * cig + cil + 1) * k];
                    for (ki, &wv) in wrow.iter().enumerate() {
                        let (lo, hi) = tap_range(l_in, l_out, ki, stride, padding);
                        if stride == 1 {
                            let xoff = lo + ki - padding;
                            for (gxv, &gyv) in
                                gxrow[xoff..xoff + hi - lo].iter_mut().zip(&gyrow[lo..hi])
                            {
                                *gxv += wv * gyv;
                            }
                        } else {
                            for l in lo..hi {
                                gxrow[l * stride + ki - padding] += wv * gyrow[l];
                            }
                        }
                    }
                }
            }
        });
    gx
}

/// Gradient w.r.t. the conv weight; batch reduction runs in a fixed order
/// inside each output-channel task.
pub(crate) fn conv1d_bwd_w<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    w_shape: &[usize],
    stride: usize,
    padding: usize,
    groups: usize,
) -> Tensor<T> {
    let (b, c_in, l_in) = x.dims3().unwrap();
    let (_, c_out, l_out) = gy.dims3().unwrap();
    let cig = w_shape[1];
    let k = w_shape[2];
    let cog = c_out / groups;

    let mut gw = Tensor::zeros(w_shape);
    let xd = x.data();
    let gyd = gy.data();
    par_chunks_mut(gw.data_mut(), cig * k)
        .enumerate()
        .for_each(|(co, gwrow)| {
            let g = co / cog;
            for bi in 0..b {
                let gyrow = &gyd[(bi * c_out + co) * l_out..(bi * c_out + co + 1) * l_out];
                for cil in 0..cig {
                    let ci = g * cig + cil;
                    let xrow = &xd[(bi * c_in + ci) * l_in..(bi * c_in + ci + 1) * l_in];
                    for ki in 0..k {
                        let (lo, hi) = tap_range(l_in, l_out, ki, stride, padding);
                        let mut acc = T::zero();
                        if stride == 1 {
                            let xoff = lo + ki - padding;
                            for (&gyv, &xv) in gyrow[lo..hi].iter().zip(&xrow[xoff..xoff + hi - lo])
                            {
                                acc += gyv * xv;
                            }
                        } else {
                            for l in lo..hi {
                                acc += gyrow[l] * xrow[l * stride + ki - padding];
                            }
                        }
                        gwrow[cil * k + ki] += acc;
                    }
                }
            }
        });
    gw
}

pub(crate) fn conv1d_bwd_b<T: Scalar>(gy: &Tensor<T>) -> Tensor<T> {
    let (b, c_out, l_out) = gy.dims3().unwrap();
    let mut gb = Tensor::zeros(&[c_out]);
    let gyd = gy.data();
    for bi in 0..b {
        for (co, gbv) in gb.data_mut().iter_mut().enumerate() {
            let row = &gyd[(bi * c_out + co) * l_out..(bi * c_out + co + 1) * l_out];
            for &v in row {
                *gbv += v;
            }
        }
    }
    gb
}

/// Affine map over the last dimension: `[R, Din] x [Dout, Din] -> [R, Dout]`.
pub(crate) fn linear_fwd<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Tensor<T> {
    let d_in = *x.shape().last().unwrap();
    let rows = x.numel() / d_in;
    let d_out = w.shape()[0];
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().unwrap() = d_out;

    let mut out = Tensor::zeros(&out_shape);
    let xd = x.data();
    let wd = w.data();
    par_chunks_mut(out.data_mut(), d_out)
        .enumerate()
        .for_each(|(r, orow)| {
            let xrow = &xd[r * d_in..(r + 1) * d_in];
            for (o, wo) in orow.iter_mut().zip(wd.chunks_exact(d_in)) {
                let mut acc = T::zero();
                for (&wv, &xv) in wo.iter().zip(xrow) {
                    acc += wv * xv;
                }
                *o = acc;
            }
            if let Some(bias) = bias {
                for (o, &bv) in orow.iter_mut().zip(bias.data()) {
                    *o += bv;
                }
            }
        });
    let _ = rows;
    out
}

pub(crate) fn linear_bwd_x<T: Scalar>(gy: &Tensor<T>, w: &Tensor<T>, x_shape: &[usize]) -> Tensor<T> {
    let d_in = *x_shape.last().unwrap();
    let d_out = w.shape()[0];
    let mut gx = Tensor::zeros(x_shape);
    let gyd = gy.data();
    let wd = w.data();
    par_chunks_mut(gx.data_mut(), d_in)
        .enumerate()
        .for_each(|(r, gxrow)| {
            let gyrow = &gyd[r * d_out..(r + 1) * d_out];
            for (&gyv, wo) in gyrow.iter().zip(wd.chunks_exact(d_in)) {
                for (gxv, &wv) in gxrow.iter_mut().zip(wo) {
                    *gxv += gyv * wv;
                }
            }
        });
    gx
}

pub(crate) fn linear_bwd_w<T: Scalar>(gy: &Tensor<T>, x: &Tensor<T>, w_shape: &[usize]) -> Tensor<T> {
    let d_in = w_shape[1];
    let d_out = w_shape[0];
    let rows = x.numel() / d_in;
    let mut gw = Tensor::zeros(w_shape);
    let xd = x.data();
    let gyd = gy.data();
    par_chunks_mut(gw.data_mut(), d_in)
        .enumerate()
        .for_each(|(dout, gwrow)| {
            for r in 0..rows {
                let gyv = gyd[r * d_out + dout];
                if gyv != T::zero() {
                    let xrow = &xd[r * d_in..(r + 1) * d_in];
                    for (gwv, &xv) in gwrow.iter_mut().zip(xrow) {
                        *gwv += gyv * xv;
                    }
                }
            }
        });
    gw
}

pub(crate) fn linear_bwd_b<T: Scalar>(gy: &Tensor<T>, d_out: usize) -> Tensor<T> {
    let rows = gy.numel() / d_out;
    let mut gb = Tensor::zeros(&[d_out]);
    let gyd = gy.data();
    for r in 0..rows {
        for (gbv, &gyv) in gb.data_mut().iter_mut().zip(&gyd[r * d_out..(r + 1) * d_out]) {
            *gbv += gyv;
        }
    }
    gb
}

/// Rank-2/3 tensors normalized over dim 1 (channels): per position, subtract
/// the channel mean and divide by `sqrt(var + eps)`, then scale/shift per
/// channel. Two-pass mean/variance.
pub(crate) fn layer_norm_fwd<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Tensor<T> {
    let (b, c, l) = norm_dims(x);
    let eps = T::from_f64(eps);
    let inv_c = T::from_f64(1.0 / c as f64);
    let mut out = Tensor::zeros(x.shape());
    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    par_chunks_mut(out.data_mut(), c * l)
        .enumerate()
        .for_each(|(bi, ob)| {
            let xb = &xd[bi * c * l..(bi + 1) * c * l];
            let mut mean = vec![T::zero(); l];
            let mut var = vec![T::zero(); l];
            for ci in 0..c {
                for (m, &xv) in mean.iter_mut().zip(&xb[ci * l..(ci + 1) * l]) {
                    *m += xv;
                }
            }
            for m in mean.iter_mut() {
                *m *= inv_c;
            }
            for ci in 0..c {
                for ((v, &m), &xv) in var.iter_mut().zip(&mean).zip(&xb[ci * l..(ci + 1) * l]) {
                    let d = xv - m;
                    *v += d * d;
                }
            }
            for v in var.iter_mut() {
                *v = ((*v * inv_c) + eps).sqrt().recip();
            }
            for ci in 0..c {
                let (g, be) = (gd[ci], bd[ci]);
                let orow = &mut ob[ci * l..(ci + 1) * l];
                let xrow = &xb[ci * l..(ci + 1) * l];
                for ((o, &xv), (&m, &inv)) in
                    orow.iter_mut().zip(xrow).zip(mean.iter().zip(&var))
                {
                    *o = (xv - m) * inv * g + be;
                }
            }
        });
    out
}

/// Returns `(gx, ggamma, gbeta)`; statistics recomputed from `x`.
pub(crate) fn layer_norm_bwd<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    eps: f64,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (b, c, l) = norm_dims(x);
    let eps = T::from_f64(eps);
    let inv_c = T::from_f64(1.0 / c as f64);
    let mut gx = Tensor::zeros(x.shape());
    let mut ggamma = Tensor::zeros(&[c]);
    let mut gbeta = Tensor::zeros(&[c]);
    let xd = x.data();
    let gyd = gy.data();
    let gd = gamma.data();

    // dgamma/dbeta accumulate across batch and positions; keep that reduction
    // sequential (it is tiny next to the conv work).
    for bi in 0..b {
        let xb = &xd[bi * c * l..(bi + 1) * c * l];
        let gyb = &gyd[bi * c * l..(bi + 1) * c * l];
        let gxb = &mut gx.data_mut()[bi * c * l..(bi + 1) * c * l];

        let mut mean = vec![T::zero(); l];
        let mut inv = vec![T::zero(); l];
        for ci in 0..c {
            for (m, &xv) in mean.iter_mut().zip(&xb[ci * l..(ci + 1) * l]) {
                *m += xv;
            }
        }
        for m in mean.iter_mut() {
            *m *= inv_c;
        }
        for ci in 0..c {
            for ((v, &m), &xv) in inv.iter_mut().zip(&mean).zip(&xb[ci * l..(ci + 1) * l]) {
                let d = xv - m;
                *v += d * d;
            }
        }
        for v in inv.iter_mut() {
            *v = ((*v * inv_c) + eps).sqrt().recip();
        }

        // Per position: dx = inv * (dyg - mean(dyg) - xhat * mean(dyg * xhat))
        // with dyg = dy * gamma.
        let mut sum_dyg = vec![T::zero(); l];
        let mut sum_dyg_xh = vec![T::zero(); l];
        for ci in 0..c {
            let g = gd[ci];
            let xrow = &xb[ci * l..(ci + 1) * l];
            let gyrow = &gyb[ci * l..(ci + 1) * l];
            for li in 0..l {
                let xh = (xrow[li] - mean[li]) * inv[li];
                let dyg = gyrow[li] * g;
                sum_dyg[li] += dyg;
                sum_dyg_xh[li] += dyg * xh;
                ggamma.data_mut()[ci] += gyrow[li] * xh;
                gbeta.data_mut()[ci] += gyrow[li];
            }
        }
        for ci in 0..c {
            let g = gd[ci];
            let xrow = &xb[ci * l..(ci + 1) * l];
            let gyrow = &gyb[ci * l..(ci + 1) * l];
            let gxrow = &mut gxb[ci * l..(ci + 1) * l];
            for li in 0..l {
                let xh = (xrow[li] - mean[li]) * inv[li];
                gxrow[li] =
                    inv[li] * (gyrow[li] * g - (sum_dyg[li] + xh * sum_dyg_xh[li]) * inv_c);
            }
        }
    }
    (gx, ggamma, gbeta)
}

fn norm_dims<T: Scalar>(x: &Tensor<T>) -> (usize, usize, usize) {
    match x.shape()[..] {
        [b, c, l] => (b, c, l),
        [b, c] => (b, c, 1),
        _ => panic!("layer_norm expects rank 2 or 3, got {:?}", x.shape()),
    }
}

const GELU_COEF: f64 = 0.044_715;

/// tanh-approximated GELU.
pub(crate) fn gelu_fwd<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let c0 = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let c1 = T::from_f64(GELU_COEF);
    let half = T::from_f64(0.5);
    let mut out = x.clone();
    par_chunks_mut(out.data_mut(), 4096).for_each(|chunk| {
        for v in chunk {
            let x = *v;
            let t = (c0 * (x + c1 * x * x * x)).tanh();
            *v = half * x * (T::one() + t);
        }
    });
    out
}

pub(crate) fn gelu_bwd<T: Scalar>(gy: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    let c0 = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let c1 = T::from_f64(GELU_COEF);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let mut gx = Tensor::zeros(x.shape());
    let xd = x.data();
    let gyd = gy.data();
    par_chunks_mut(gx.data_mut(), 4096)
        .enumerate()
        .for_each(|(ci, chunk)| {
            let base = ci * 4096;
            for (i, g) in chunk.iter_mut().enumerate() {
                let x = xd[base + i];
                let u = c0 * (x + c1 * x * x * x);
                let t = u.tanh();
                let du = c0 * (T::one() + three * c1 * x * x);
                let d = half * (T::one() + t) + half * x * (T::one() - t * t) * du;
                *g = gyd[base + i] * d;
            }
        });
    gx
}

/// Global response normalization over `[B, C, L]`:
/// `g_c = ||x_c||_2` over positions, `n_c = g_c / (mean_c g + eps)`,
/// `y = gamma_c * (x_c * n_c) + beta_c + x_c`.
pub(crate) fn grn_fwd<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Tensor<T> {
    let (b, c, l) = x.dims3().unwrap();
    let eps = T::from_f64(eps);
    let inv_c = T::from_f64(1.0 / c as f64);
    let mut out = Tensor::zeros(x.shape());
    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    par_chunks_mut(out.data_mut(), c * l)
        .enumerate()
        .for_each(|(bi, ob)| {
            let xb = &xd[bi * c * l..(bi + 1) * c * l];
            let mut norms = vec![T::zero(); c];
            for (ci, n) in norms.iter_mut().enumerate() {
                let mut acc = T::zero();
                for &xv in &xb[ci * l..(ci + 1) * l] {
                    acc += xv * xv;
                }
                *n = acc.sqrt();
            }
            let mut mean = T::zero();
            for &n in &norms {
                mean += n;
            }
            mean = mean * inv_c + eps;
            for ci in 0..c {
                let scale = gd[ci] * (norms[ci] / mean);
                let be = bd[ci];
                let orow = &mut ob[ci * l..(ci + 1) * l];
                for (o, &xv) in orow.iter_mut().zip(&xb[ci * l..(ci + 1) * l]) {
                    *o = scale * xv + be + xv;
                }
            }
        });
    out
}

pub(crate) fn grn_bwd<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    eps: f64,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (b, c, l) = x.dims3().unwrap();
    let eps = T::from_f64(eps);
    let inv_c = T::from_f64(1.0 / c as f64);
    let mut gx = Tensor::zeros(x.shape());
    let mut ggamma = Tensor::zeros(&[c]);
    let mut gbeta = Tensor::zeros(&[c]);
    let xd = x.data();
    let gyd = gy.data();
    let gd = gamma.data();

    for bi in 0..b {
        let xb = &xd[bi * c * l..(bi + 1) * c * l];
        let gyb = &gyd[bi * c * l..(bi + 1) * c * l];
        let gxb = &mut gx.data_mut()[bi * c * l..(bi + 1) * c * l];

        let mut norms = vec![T::zero(); c];
        // A_c = sum_l dy_c,l * x_c,l
        let mut dots = vec![T::zero(); c];
        for ci in 0..c {
            let xrow = &xb[ci * l..(ci + 1) * l];
            let gyrow = &gyb[ci * l..(ci + 1) * l];
            let mut sq = T::zero();
            let mut dot = T::zero();
            for (&xv, &gyv) in xrow.iter().zip(gyrow) {
                sq += xv * xv;
                dot += gyv * xv;
            }
            norms[ci] = sq.sqrt();
            dots[ci] = dot;
        }
        let mut mean = T::zero();
        for &n in &norms {
            mean += n;
        }
        mean = mean * inv_c + eps;

        // cross = sum_c gamma_c * A_c * g_c, feeding the -g_c/(C*mean^2) term
        // of dn_c/dg_d.
        let mut cross = T::zero();
        for ci in 0..c {
            cross += gd[ci] * dots[ci] * norms[ci];
        }
        let cross_term = cross * inv_c / (mean * mean);

        for ci in 0..c {
            let n_c = norms[ci] / mean;
            ggamma.data_mut()[ci] += dots[ci] * n_c;
            let mut gb_acc = T::zero();
            for &gyv in &gyb[ci * l..(ci + 1) * l] {
                gb_acc += gyv;
            }
            gbeta.data_mut()[ci] += gb_acc;

            let direct = T::one() + gd[ci] * n_c;
            let radial = if norms[ci] > T::zero() {
                (gd[ci] * dots[ci] / mean - cross_term) / norms[ci]
            } else {
                T::zero()
            };
            let xrow = &xb[ci * l..(ci + 1) * l];
            let gyrow = &gyb[ci * l..(ci + 1) * l];
            let gxrow = &mut gxb[ci * l..(ci + 1) * l];
            for ((gxv, &gyv), &xv) in gxrow.iter_mut().zip(gyrow).zip(xrow) {
                *gxv = gyv * direct + xv * radial;
            }
        }
    }
    (gx, ggamma, gbeta)
}

pub(crate) fn global_avg_pool_fwd<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (b, c, l) = x.dims3().unwrap();
    let inv_l = T::from_f64(1.0 / l as f64);
    let mut out = Tensor::zeros(&[b, c]);
    let xd = x.data();
    for bi in 0..b {
        for ci in 0..c {
            let mut acc = T::zero();
            for &v in &xd[(bi * c + ci) * l..(bi * c + ci + 1) * l] {
                acc += v;
            }
            out.data_mut()[bi * c + ci] = acc * inv_l;
        }
    }
    out
}

pub(crate) fn global_avg_pool_bwd<T: Scalar>(gy: &Tensor<T>, l: usize) -> Tensor<T> {
    let (b, c) = gy.dims2().unwrap();
    let inv_l = T::from_f64(1.0 / l as f64);
    let mut gx = Tensor::zeros(&[b, c, l]);
    let gyd = gy.data();
    for bi in 0..b {
        for ci in 0..c {
            let g = gyd[bi * c + ci] * inv_l;
            gx.data_mut()[(bi * c + ci) * l..(bi * c + ci + 1) * l].fill(g);
        }
    }
    gx
}

/// Mean over the batch of `-sum_k target_k * log softmax(logits)_k`,
/// stabilized by max subtraction. Returns `(loss, softmax)`; the softmax is
/// reused by the backward pass.
pub(crate) fn softmax_ce_fwd<T: Scalar>(logits: &Tensor<T>, targets: &Tensor<T>) -> (T, Tensor<T>) {
    let (b, k) = logits.dims2().unwrap();
    let mut probs = Tensor::zeros(&[b, k]);
    let ld = logits.data();
    let td = targets.data();
    let mut loss = T::zero();
    for bi in 0..b {
        let row = &ld[bi * k..(bi + 1) * k];
        let trow = &td[bi * k..(bi + 1) * k];
        let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let mut denom = T::zero();
        let prow = &mut probs.data_mut()[bi * k..(bi + 1) * k];
        for (p, &z) in prow.iter_mut().zip(row) {
            let e = (z - max).exp();
            *p = e;
            denom += e;
        }
        let lse = max + denom.ln();
        let inv = denom.recip();
        for p in prow.iter_mut() {
            *p *= inv;
        }
        let mut dot = T::zero();
        for (&t, &z) in trow.iter().zip(row) {
            dot += t * z;
        }
        loss += lse - dot;
    }
    (loss / T::from_f64(b as f64), probs)
}

pub(crate) fn softmax_ce_bwd<T: Scalar>(
    gloss: T,
    probs: &Tensor<T>,
    targets: &Tensor<T>,
) -> Tensor<T> {
    let (b, k) = probs.dims2().unwrap();
    let scale = gloss / T::from_f64(b as f64);
    let mut gx = Tensor::zeros(&[b, k]);
    for ((g, &p), &t) in gx
        .data_mut()
        .iter_mut()
        .zip(probs.data())
        .zip(targets.data())
    {
        *g = scale * (p - t);
    }
    gx
}

/// Mean squared error over mask-active samples only.
pub(crate) fn mse_masked_fwd<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &Tensor<T>,
) -> (T, usize) {
    let mut active = 0usize;
    let mut acc = T::zero();
    for ((&p, &t), &m) in pred.data().iter().zip(target.data()).zip(mask.data()) {
        if m != T::zero() {
            let d = p - t;
            acc += d * d;
            active += 1;
        }
    }
    (acc / T::from_f64(active as f64), active)
}

pub(crate) fn mse_masked_bwd<T: Scalar>(
    gloss: T,
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mask: &Tensor<T>,
    active: usize,
) -> Tensor<T> {
    let scale = gloss * T::from_f64(2.0 / active as f64);
    let mut gx = Tensor::zeros(pred.shape());
    for (((g, &p), &t), &m) in gx
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
        .zip(mask.data())
    {
        if m != T::zero() {
            *g = scale * (p - t);
        }
    }
    gx
}

/// Zero out whole positions of `[B, C, L]` according to a `[B, L]` keep mask.
pub(crate) fn mask_positions_fwd<T: Scalar>(x: &Tensor<T>, keep: &Tensor<T>) -> Tensor<T> {
    let (b, c, l) = x.dims3().unwrap();
    let mut out = x.clone();
    let kd = keep.data();
    par_chunks_mut(out.data_mut(), c * l)
        .enumerate()
        .for_each(|(bi, ob)| {
            let krow = &kd[bi * l..(bi + 1) * l];
            for ci in 0..c {
                for (o, &kv) in ob[ci * l..(ci + 1) * l].iter_mut().zip(krow) {
                    *o = *o * kv;
                }
            }
        });
    out
}

/// Broadcast a `[D]` token into `[B, D, L]` at positions where `slots` is 1.
pub(crate) fn place_token_fwd<T: Scalar>(
    token: &Tensor<T>,
    slots: &Tensor<T>,
    b: usize,
) -> Tensor<T> {
    let d = token.shape()[0];
    let l = slots.shape()[1];
    let mut out = Tensor::zeros(&[b, d, l]);
    let td = token.data();
    let sd = slots.data();
    for bi in 0..b {
        let srow = &sd[bi * l..(bi + 1) * l];
        for di in 0..d {
            let tv = td[di];
            let orow = &mut out.data_mut()[(bi * d + di) * l..(bi * d + di + 1) * l];
            for (o, &sv) in orow.iter_mut().zip(srow) {
                *o = tv * sv;
            }
        }
    }
    out
}

pub(crate) fn place_token_bwd<T: Scalar>(gy: &Tensor<T>, slots: &Tensor<T>) -> Tensor<T> {
    let (b, d, l) = gy.dims3().unwrap();
    let mut gt = Tensor::zeros(&[d]);
    let gyd = gy.data();
    let sd = slots.data();
    for bi in 0..b {
        let srow = &sd[bi * l..(bi + 1) * l];
        for (di, gtv) in gt.data_mut().iter_mut().enumerate() {
            let gyrow = &gyd[(bi * d + di) * l..(bi * d + di + 1) * l];
            for (&gyv, &sv) in gyrow.iter().zip(srow) {
                *gtv += gyv * sv;
            }
        }
    }
    gt
}

/// `[B, K, P] -> [B, K*P]` with `out[b, p*K + s] = x[b, s, p]`: channel `s`
/// at position `p` becomes sample `s` of output patch `p`.
pub(crate) fn flatten_patches_fwd<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (b, k, p) = x.dims3().unwrap();
    let mut out = Tensor::zeros(&[b, k * p]);
    let xd = x.data();
    for bi in 0..b {
        let ob = &mut out.data_mut()[bi * k * p..(bi + 1) * k * p];
        for si in 0..k {
            let xrow = &xd[(bi * k + si) * p..(bi * k + si + 1) * p];
            for (pi, &xv) in xrow.iter().enumerate() {
                ob[pi * k + si] = xv;
            }
        }
    }
    out
}

pub(crate) fn flatten_patches_bwd<T: Scalar>(gy: &Tensor<T>, k: usize, p: usize) -> Tensor<T> {
    let b = gy.shape()[0];
    let mut gx = Tensor::zeros(&[b, k, p]);
    let gyd = gy.data();
    for bi in 0..b {
        let gyb = &gyd[bi * k * p..(bi + 1) * k * p];
        for si in 0..k {
            let gxrow = &mut gx.data_mut()[(bi * k + si) * p..(bi * k + si + 1) * p];
            for (pi, gxv) in gxrow.iter_mut().enumerate() {
                *gxv = gyb[pi * k + si];
            }
        }
    }
    gx
}

/// Scalar projection `sum(x * r)`, the generic scalarizer for gradient checks.
pub(crate) fn dot_const_fwd<T: Scalar>(x: &Tensor<T>, r: &Tensor<T>) -> T {
    let mut acc = T::zero();
    for (&a, &b) in x.data().iter().zip(r.data()) {
        acc += a * b;
    }
    acc
}

pub(crate) fn add_fwd<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    out.add_assign(y);
    out
}

/// Silence an unused-import warning in sequential builds.
#[cfg(not(feature = "parallel"))]
#[allow(unused)]
fn _seq_marker() {
    let _ = par_range(0, 0);
}

#[cfg(feature = "parallel")]
#[allow(unused)]
fn _par_marker() {
    par_range(0, 0).for_each(|_| {});
}

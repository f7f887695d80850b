//! Forward and backward kernels for the tape operations.
//!
//! Convolutions are "same"-padded, stride 1, with odd square kernels and run
//! as im2col + GEMM per sample, in bands of image rows.

use crate::scalar::{matmul, matmul_strided, Scalar};
use crate::tensor::Tensor;

pub(crate) const BN_EPS: f64 = 1e-5;

/// Elements of one im2col band; small enough to stay cache resident.
const BAND_ELEMS: usize = 1 << 15;

/// Image rows per band for a `ckk`-row im2col matrix of width `w`.
fn band_rows(ckk: usize, w: usize) -> usize {
    (BAND_ELEMS / (ckk * w)).max(1)
}

/// im2col restricted to output rows `y0..y1`; `cols` is `ckk x ((y1-y0)*w)`.
#[allow(clippy::too_many_arguments)]
fn im2col_rows<T: Scalar>(x: &[T], cin: usize, h: usize, w: usize, k: usize, y0: usize, y1: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let plane = h * w;
    let bn = (y1 - y0) * w;
    for c in 0..cin {
        let src_plane = &x[c * plane..(c + 1) * plane];
        for ky in 0..k {
            let dy = ky as isize - pad;
            for kx in 0..k {
                let dx = kx as isize - pad;
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * bn..(row + 1) * bn];
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(x0 as isize) as usize;
                for y in y0..y1 {
                    let drow = &mut dst[(y - y0) * w..(y - y0 + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let srow = &src_plane[sy as usize * w..(sy as usize + 1) * w];
                    drow[..x0].fill(T::zero());
                    let s0 = (x0 as isize + dx) as usize;
                    drow[x0..x1].copy_from_slice(&srow[s0..s0 + (x1 - x0)]);
                    drow[x1..].fill(T::zero());
                }
            }
        }
    }
}

/// Adjoint of [`im2col_rows`], accumulated into `dx`.
#[allow(clippy::too_many_arguments)]
fn col2im_rows_add<T: Scalar>(
    cols: &[T],
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    y0: usize,
    y1: usize,
    dx: &mut [T],
) {
    let pad = (k / 2) as isize;
    let plane = h * w;
    let bn = (y1 - y0) * w;
    for c in 0..cin {
        let dst_plane = &mut dx[c * plane..(c + 1) * plane];
        for ky in 0..k {
            let dy = ky as isize - pad;
            for kx in 0..k {
                let ddx = kx as isize - pad;
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * bn..(row + 1) * bn];
                let x0 = (-ddx).max(0) as usize;
                let x1 = (w as isize - ddx).min(w as isize).max(x0 as isize) as usize;
                for y in y0..y1 {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x0 as isize + ddx) as usize;
                    let drow = &mut dst_plane[sy as usize * w + s0..sy as usize * w + s0 + (x1 - x0)];
                    let srow = &src[(y - y0) * w + x0..(y - y0) * w + x1];
                    for (d, &s) in drow.iter_mut().zip(srow) {
                        *d += s;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&Tensor<T>>) -> Tensor<T> {
    let [n, cin, h, wd] = x.shape();
    let [cout, wcin, k, _] = w.shape();
    debug_assert_eq!(cin, wcin);
    let plane = h * wd;
    let ckk = cin * k * k;
    let mut out = Tensor::zeros([n, cout, h, wd]);
    let rows = band_rows(ckk, wd);
    let mut cols = if k == 1 {
        Vec::new()
    } else {
        vec![T::zero(); ckk * rows * wd]
    };
    for s in 0..n {
        let xs = x.sample(s);
        let ys = out.sample_mut(s);
        if k == 1 {
            matmul(cout, ckk, plane, w.data(), false, xs, false, ys, false);
        } else {
            for y0 in (0..h).step_by(rows) {
                let y1 = (y0 + rows).min(h);
                let bn = (y1 - y0) * wd;
                im2col_rows(xs, cin, h, wd, k, y0, y1, &mut cols);
                matmul_strided(
                    cout,
                    ckk,
                    bn,
                    (w.data(), ckk, 1),
                    (&cols[..ckk * bn], bn, 1),
                    &mut ys[y0 * wd..],
                    plane,
                    false,
                );
            }
        }
        if let Some(b) = bias {
            for (co, &bv) in b.data().iter().enumerate() {
                ys[co * plane..(co + 1) * plane].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
    need_db: bool,
) -> ConvGrads<T> {
    let [n, cin, h, wd] = x.shape();
    let [cout, _, k, _] = w.shape();
    let plane = h * wd;
    let ckk = cin * k * k;
    let mut dw = Tensor::zeros(w.shape());
    let mut db = need_db.then(|| Tensor::zeros([cout, 1, 1, 1]));
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    let rows = band_rows(ckk, wd);
    let band = if k == 1 { 0 } else { ckk * rows * wd };
    let mut cols = vec![T::zero(); band];
    let mut dcols = vec![T::zero(); if need_dx { band } else { 0 }];
    for s in 0..n {
        let xs = x.sample(s);
        let dys = dy.sample(s);
        if let Some(db) = db.as_mut() {
            for (co, acc) in db.data_mut().iter_mut().enumerate() {
                *acc += dys[co * plane..(co + 1) * plane].iter().fold(T::zero(), |a, &b| a + b);
            }
        }
        if k == 1 {
            matmul(cout, plane, ckk, dys, false, xs, true, dw.data_mut(), true);
            if let Some(dx) = dx.as_mut() {
                matmul(ckk, cout, plane, w.data(), true, dys, false, dx.sample_mut(s), false);
            }
            continue;
        }
        for y0 in (0..h).step_by(rows) {
            let y1 = (y0 + rows).min(h);
            let bn = (y1 - y0) * wd;
            im2col_rows(xs, cin, h, wd, k, y0, y1, &mut cols);
            let dy_band = (&dys[y0 * wd..], plane, 1);
            matmul_strided(
                cout,
                bn,
                ckk,
                dy_band,
                (&cols[..ckk * bn], 1, bn),
                dw.data_mut(),
                ckk,
                true,
            );
            if let Some(dx) = dx.as_mut() {
                matmul_strided(
                    ckk,
                    cout,
                    bn,
                    (w.data(), 1, ckk),
                    dy_band,
                    &mut dcols[..ckk * bn],
                    bn,
                    false,
                );
                col2im_rows_add(&dcols, cin, h, wd, k, y0, y1, dx.sample_mut(s));
            }
        }
    }
    ConvGrads { dx, dw, db }
}

/// Per-channel mean and biased variance over batch and space.
pub(crate) fn channel_moments<T: Scalar>(x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let [n, c, _, _] = x.shape();
    let plane = x.plane_len();
    let count = (n * plane) as f64;
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = 0.0f64;
        for b in 0..n {
            let off = x.offset(b, ch, 0, 0);
            s += x.data()[off..off + plane].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let m = s / count;
        let mut q = 0.0f64;
        for b in 0..n {
            let off = x.offset(b, ch, 0, 0);
            q += x.data()[off..off + plane]
                .iter()
                .map(|v| {
                    let d = v.as_f64() - m;
                    d * d
                })
                .sum::<f64>();
        }
        mean[ch] = T::from_f64_lossy(m);
        var[ch] = T::from_f64_lossy(q / count);
    }
    (mean, var)
}

/// `y = gamma * (x - mean) * inv_std + beta` per channel.
pub(crate) fn affine_normalize<T: Scalar>(
    x: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
    beta: &[T],
) -> Tensor<T> {
    let [n, c, _, _] = x.shape();
    let plane = x.plane_len();
    let mut y = Tensor::zeros(x.shape());
    for b in 0..n {
        for ch in 0..c {
            let off = x.offset(b, ch, 0, 0);
            let scale = gamma[ch] * inv_std[ch];
            let shift = beta[ch] - mean[ch] * scale;
            for (o, &v) in y.data_mut()[off..off + plane]
                .iter_mut()
                .zip(&x.data()[off..off + plane])
            {
                *o = v * scale + shift;
            }
        }
    }
    y
}

pub(crate) struct NormGrads<T> {
    pub dx: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
}

/// Backward of batch normalisation. With `batch_stats` the mean and variance
/// are functions of `x`; otherwise they are constants (running statistics).
pub(crate) fn batch_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
    dy: &Tensor<T>,
    batch_stats: bool,
) -> NormGrads<T> {
    let [n, c, _, _] = x.shape();
    let plane = x.plane_len();
    let count = T::from_usize(n * plane).unwrap();
    let mut dx = Tensor::zeros(x.shape());
    let mut dgamma = Tensor::zeros([c, 1, 1, 1]);
    let mut dbeta = Tensor::zeros([c, 1, 1, 1]);
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for b in 0..n {
            let off = x.offset(b, ch, 0, 0);
            for (&xv, &g) in x.data()[off..off + plane].iter().zip(&dy.data()[off..off + plane]) {
                let xhat = (xv - mean[ch]) * inv_std[ch];
                sum_dy += g;
                sum_dy_xhat += g * xhat;
            }
        }
        dgamma.data_mut()[ch] = sum_dy_xhat;
        dbeta.data_mut()[ch] = sum_dy;
        let k = gamma[ch] * inv_std[ch];
        for b in 0..n {
            let off = x.offset(b, ch, 0, 0);
            let xs = &x.data()[off..off + plane];
            let gs = &dy.data()[off..off + plane];
            let ds = &mut dx.data_mut()[off..off + plane];
            if batch_stats {
                let mean_dy = sum_dy / count;
                let mean_dy_xhat = sum_dy_xhat / count;
                for ((d, &xv), &g) in ds.iter_mut().zip(xs).zip(gs) {
                    let xhat = (xv - mean[ch]) * inv_std[ch];
                    *d = k * (g - mean_dy - xhat * mean_dy_xhat);
                }
            } else {
                for (d, &g) in ds.iter_mut().zip(gs) {
                    *d = k * g;
                }
            }
        }
    }
    NormGrads { dx, dgamma, dbeta }
}

pub(crate) fn max_pool2_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    let mut arg = vec![0u32; n * c * oh * ow];
    let xd = x.data();
    let mut o = 0;
    for b in 0..n {
        for ch in 0..c {
            let base = x.offset(b, ch, 0, 0);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    y.data_mut()[o] = xd[best];
                    arg[o] = best as u32;
                    o += 1;
                }
            }
        }
    }
    (y, arg)
}

pub(crate) fn max_pool2_backward<T: Scalar>(input_shape: [usize; 4], arg: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    for (&a, &g) in arg.iter().zip(dy.data()) {
        dx.data_mut()[a as usize] += g;
    }
    dx
}

/// Source taps `(i0, i1, w0, w1)` for 2x bilinear upsampling with half-pixel
/// centres (`align_corners = false`).
fn upsample_taps(n_in: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n_in)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let l = src - i0 as f64;
            (i0, i1, 1.0 - l, l)
        })
        .collect()
}

pub(crate) fn upsample2_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let ty = upsample_taps(h);
    let tx: Vec<_> = upsample_taps(w)
        .into_iter()
        .map(|(a, b, wa, wb)| (a, b, T::from_f64_lossy(wa), T::from_f64_lossy(wb)))
        .collect();
    let mut y = Tensor::zeros([n, c, 2 * h, 2 * w]);
    let mut row0 = vec![T::zero(); 2 * w];
    let mut row1 = vec![T::zero(); 2 * w];
    for p in 0..n * c {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut y.data_mut()[p * 4 * h * w..(p + 1) * 4 * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64_lossy(wy0), T::from_f64_lossy(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                row0[ox] = src[y0 * w + x0] * wx0 + src[y0 * w + x1] * wx1;
                row1[ox] = src[y1 * w + x0] * wx0 + src[y1 * w + x1] * wx1;
            }
            let out = &mut dst[oy * 2 * w..(oy + 1) * 2 * w];
            for ((o, &a), &b) in out.iter_mut().zip(&row0).zip(&row1) {
                *o = a * wy0 + b * wy1;
            }
        }
    }
    y
}

pub(crate) fn upsample2_backward<T: Scalar>(input_shape: [usize; 4], dy: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = input_shape;
    let ty = upsample_taps(h);
    let tx: Vec<_> = upsample_taps(w)
        .into_iter()
        .map(|(a, b, wa, wb)| (a, b, T::from_f64_lossy(wa), T::from_f64_lossy(wb)))
        .collect();
    let mut dx = Tensor::zeros(input_shape);
    for p in 0..n * c {
        let g = &dy.data()[p * 4 * h * w..(p + 1) * 4 * h * w];
        let d = &mut dx.data_mut()[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64_lossy(wy0), T::from_f64_lossy(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let v = g[oy * 2 * w + ox];
                let a = v * wy0;
                let b = v * wy1;
                d[y0 * w + x0] += a * wx0;
                d[y0 * w + x1] += a * wx1;
                d[y1 * w + x0] += b * wx0;
                d[y1 * w + x1] += b * wx1;
            }
        }
    }
    dx
}

fn broadcast_strides(shape: [usize; 4], out: [usize; 4]) -> [usize; 4] {
    let mut strides = [0usize; 4];
    let mut acc = 1;
    for d in (0..4).rev() {
        strides[d] = if shape[d] == 1 && out[d] != 1 { 0 } else { acc };
        acc *= shape[d];
    }
    strides
}

/// Shape of `a * b` under size-1 broadcasting, if compatible.
pub(crate) fn broadcast_shape(a: [usize; 4], b: [usize; 4]) -> Option<[usize; 4]> {
    let mut out = [0; 4];
    for d in 0..4 {
        out[d] = match (a[d], b[d]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn for_each_broadcast(out: [usize; 4], sa: [usize; 4], sb: [usize; 4], mut f: impl FnMut(usize, usize, usize)) {
    let mut o = 0;
    for n in 0..out[0] {
        for c in 0..out[1] {
            for y in 0..out[2] {
                let ia = n * sa[0] + c * sa[1] + y * sa[2];
                let ib = n * sb[0] + c * sb[1] + y * sb[2];
                for x in 0..out[3] {
                    f(o, ia + x * sa[3], ib + x * sb[3]);
                    o += 1;
                }
            }
        }
    }
}

pub(crate) fn mul_broadcast_forward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, out_shape: [usize; 4]) -> Tensor<T> {
    let sa = broadcast_strides(a.shape(), out_shape);
    let sb = broadcast_strides(b.shape(), out_shape);
    let mut y = Tensor::zeros(out_shape);
    let (ad, bd) = (a.data(), b.data());
    let yd = y.data_mut();
    for_each_broadcast(out_shape, sa, sb, |o, ia, ib| yd[o] = ad[ia] * bd[ib]);
    y
}

pub(crate) fn mul_broadcast_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
    need_da: bool,
    need_db: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    let out = dy.shape();
    let sa = broadcast_strides(a.shape(), out);
    let sb = broadcast_strides(b.shape(), out);
    let mut da = need_da.then(|| Tensor::zeros(a.shape()));
    let mut db = need_db.then(|| Tensor::zeros(b.shape()));
    let (ad, bd, gd) = (a.data(), b.data(), dy.data());
    for_each_broadcast(out, sa, sb, |o, ia, ib| {
        if let Some(da) = da.as_mut() {
            da.data_mut()[ia] += gd[o] * bd[ib];
        }
        if let Some(db) = db.as_mut() {
            db.data_mut()[ib] += gd[o] * ad[ia];
        }
    });
    (da, db)
}

pub(crate) fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let [n, _, h, w] = parts[0].shape();
    let c: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for b in 0..n {
        for p in parts {
            data.extend_from_slice(p.sample(b));
        }
    }
    Tensor::from_vec([n, c, h, w], data).expect("concat shape")
}

pub(crate) fn split_channels<T: Scalar>(dy: &Tensor<T>, widths: &[usize]) -> Vec<Tensor<T>> {
    let [n, _, h, w] = dy.shape();
    let plane = h * w;
    let mut outs: Vec<Vec<T>> = widths.iter().map(|&c| Vec::with_capacity(n * c * plane)).collect();
    for b in 0..n {
        let s = dy.sample(b);
        let mut off = 0;
        for (o, &c) in outs.iter_mut().zip(widths) {
            o.extend_from_slice(&s[off..off + c * plane]);
            off += c * plane;
        }
    }
    outs.into_iter()
        .zip(widths)
        .map(|(d, &c)| Tensor::from_vec([n, c, h, w], d).expect("split shape"))
        .collect()
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, _, _] = x.shape();
    let plane = x.plane_len();
    let inv = T::one() / T::from_usize(plane).unwrap();
    let data = x
        .data()
        .chunks(plane)
        .map(|p| p.iter().fold(T::zero(), |a, &b| a + b) * inv)
        .collect();
    Tensor::from_vec([n, c, 1, 1], data).expect("pool shape")
}

pub(crate) fn global_avg_pool_backward<T: Scalar>(input_shape: [usize; 4], dy: &Tensor<T>) -> Tensor<T> {
    let plane = input_shape[2] * input_shape[3];
    let inv = T::one() / T::from_usize(plane).unwrap();
    let mut dx = Tensor::zeros(input_shape);
    for (chunk, &g) in dx.data_mut().chunks_mut(plane).zip(dy.data()) {
        chunk.fill(g * inv);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>) -> Tensor<f64> {
        let [n, cin, h, wd] = x.shape();
        let [cout, _, k, _] = w.shape();
        let pad = (k / 2) as isize;
        let mut y = Tensor::zeros([n, cout, h, wd]);
        for b in 0..n {
            for co in 0..cout {
                for yy in 0..h {
                    for xx in 0..wd {
                        let mut s = 0.0;
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = yy as isize + ky as isize - pad;
                                    let sx = xx as isize + kx as isize - pad;
                                    if sy >= 0 && sy < h as isize && sx >= 0 && sx < wd as isize {
                                        s += x.at(b, ci, sy as usize, sx as usize) * w.at(co, ci, ky, kx);
                                    }
                                }
                            }
                        }
                        let o = y.offset(b, co, yy, xx);
                        y.data_mut()[o] = s;
                    }
                }
            }
        }
        y
    }

    fn ramp(shape: [usize; 4], f: f64) -> Tensor<f64> {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|i| ((i as f64) * f).sin()).collect()).unwrap()
    }

    #[test]
    fn conv_matches_direct_convolution() {
        for k in [1, 3, 5] {
            let x = ramp([2, 3, 7, 6], 0.37);
            let w = ramp([4, 3, k, k], 1.3);
            let fast = conv2d_forward(&x, &w, None);
            assert!(fast.max_abs_diff(&naive_conv(&x, &w)) < 1e-12, "k={k}");
        }
    }

    #[test]
    fn conv_backward_is_adjoint_of_forward() {
        // <conv(x), g> = <x, conv^T(g)> checks dx; dw follows from linearity in w.
        let x = ramp([2, 3, 6, 5], 0.41);
        let w = ramp([2, 3, 3, 3], 0.9);
        let g = ramp([2, 2, 6, 5], 0.23);
        let y = conv2d_forward(&x, &w, None);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let grads = conv2d_backward(&x, &w, &g, true, true);
        let rhs_x: f64 = x.data().iter().zip(grads.dx.unwrap().data()).map(|(a, b)| a * b).sum();
        let rhs_w: f64 = w.data().iter().zip(grads.dw.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_x).abs() < 1e-10);
        assert!((lhs - rhs_w).abs() < 1e-10);
    }

    #[test]
    fn upsample_backward_is_adjoint() {
        let x = ramp([1, 2, 3, 4], 0.77);
        let g = ramp([1, 2, 6, 8], 0.31);
        let y = upsample2_forward(&x);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let dx = upsample2_backward(x.shape(), &g);
        let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let x = Tensor::filled([1, 1, 4, 4], 2.5f64);
        let y = upsample2_forward(&x);
        assert!(y.data().iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn max_pool_picks_block_maximum() {
        let x = Tensor::from_vec([1, 1, 2, 4], vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, -1.0, 7.0]).unwrap();
        let (y, arg) = max_pool2_forward(&x);
        assert_eq!(y.data(), &[5.0, 7.0]);
        assert_eq!(arg, vec![1, 7]);
    }

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape([2, 4, 8, 8], [2, 1, 8, 8]), Some([2, 4, 8, 8]));
        assert_eq!(broadcast_shape([2, 4, 1, 1], [2, 4, 8, 8]), Some([2, 4, 8, 8]));
        assert_eq!(broadcast_shape([2, 4, 8, 8], [2, 3, 8, 8]), None);
    }
}

//! Conv / batch-norm / ReLU / bilinear-upsample primitives with explicit
//! backward passes. Forward caches carry exactly what the backward needs.

use alloc::vec;
use alloc::vec::Vec;

use crate::mathf;
use crate::rng::Rng;
use crate::tensor::Tensor4;

#[derive(Debug, Clone)]
pub struct Conv2d {
    /// Row-major `(out_ch, in_ch, k, k)`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub out_ch: usize,
    pub in_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// He-normal weights, zero bias.
    pub fn init(
        out_ch: usize,
        in_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = (in_ch * k * k) as f64;
        let std = mathf::sqrt(2.0 / fan_in);
        Conv2d {
            weight: rng.normal_vec(out_ch * in_ch * k * k, std),
            bias: vec![0.0; out_ch],
            out_ch,
            in_ch,
            k,
            stride,
            pad,
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    /// Valid output-column range `[lo, hi)` for a kernel column offset, so the
    /// inner loops never index outside the padded input.
    #[inline]
    fn col_range(&self, off: isize, in_len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let lo = if off < 0 { ((-off) + s - 1) / s } else { 0 };
        let hi = ((in_len as isize - 1 - off) / s + 1).clamp(0, out_len as isize);
        ((lo as usize).min(out_len), hi.max(0) as usize)
    }

    /// Unfold one image into the patch matrix `(in_ch*k*k, oh*ow)`;
    /// out-of-bounds taps stay zero (zero padding).
    fn im2col(&self, x: &Tensor4, b: usize, oh: usize, ow: usize, col: &mut [f64]) {
        let s = self.stride;
        let n = oh * ow;
        col.fill(0.0);
        for i in 0..self.in_ch {
            let xp = x.plane(b, i);
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let r = (i * self.k + ky) * self.k + kx;
                    let row = &mut col[r * n..(r + 1) * n];
                    let off_x = kx as isize - self.pad as isize;
                    let off_y = ky as isize - self.pad as isize;
                    let (xlo, xhi) = self.col_range(off_x, x.w, ow);
                    let (ylo, yhi) = self.col_range(off_y, x.h, oh);
                    if xlo >= xhi {
                        continue;
                    }
                    for oy in ylo..yhi {
                        let iy = ((oy * s) as isize + off_y) as usize;
                        let ix0 = ((xlo * s) as isize + off_x) as usize;
                        let src = &xp[iy * x.w + ix0..];
                        let dst = &mut row[oy * ow + xlo..oy * ow + xhi];
                        if s == 1 {
                            dst.copy_from_slice(&src[..dst.len()]);
                        } else {
                            for (d, v) in dst.iter_mut().zip(src.iter().step_by(s)) {
                                *d = *v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Transpose of [`Conv2d::im2col`]: scatter-add the patch-matrix gradient
    /// back onto the input plane.
    fn col2im_add(&self, gin: &mut Tensor4, b: usize, oh: usize, ow: usize, gcol: &[f64]) {
        let s = self.stride;
        let n = oh * ow;
        let (in_h, in_w) = (gin.h, gin.w);
        for i in 0..self.in_ch {
            let gp = gin.plane_mut(b, i);
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let r = (i * self.k + ky) * self.k + kx;
                    let row = &gcol[r * n..(r + 1) * n];
                    let off_x = kx as isize - self.pad as isize;
                    let off_y = ky as isize - self.pad as isize;
                    let (xlo, xhi) = self.col_range(off_x, in_w, ow);
                    let (ylo, yhi) = self.col_range(off_y, in_h, oh);
                    if xlo >= xhi {
                        continue;
                    }
                    for oy in ylo..yhi {
                        let iy = ((oy * s) as isize + off_y) as usize;
                        let ix0 = ((xlo * s) as isize + off_x) as usize;
                        let src = &row[oy * ow + xlo..oy * ow + xhi];
                        let dst = &mut gp[iy * in_w + ix0..];
                        if s == 1 {
                            for (d, v) in dst.iter_mut().zip(src) {
                                *d += v;
                            }
                        } else {
                            for (d, v) in dst.iter_mut().step_by(s).zip(src) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Tensor4 {
        assert_eq!(x.c, self.in_ch, "conv input channels");
        let (oh, ow) = self.out_dims(x.h, x.w);
        let n = oh * ow;
        let kdim = self.in_ch * self.k * self.k;
        let mut out = Tensor4::zeros(x.b, self.out_ch, oh, ow);
        let mut col = vec![0.0; kdim * n];
        for b in 0..x.b {
            self.im2col(x, b, oh, ow, &mut col);
            for o in 0..self.out_ch {
                out.plane_mut(b, o).fill(self.bias[o]);
            }
            let block = &mut out.data[b * self.out_ch * n..(b + 1) * self.out_ch * n];
            gemm_acc(block, &self.weight, &col, self.out_ch, kdim, n);
        }
        out
    }

    /// Accumulates weight/bias grads; returns the input grad when requested
    /// (the first layer of the net never needs it).
    pub fn backward(
        &self,
        x: &Tensor4,
        gout: &Tensor4,
        gweight: &mut [f64],
        gbias: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Tensor4> {
        let (oh, ow) = self.out_dims(x.h, x.w);
        assert!(gout.c == self.out_ch && gout.h == oh && gout.w == ow);
        let n = oh * ow;
        let kdim = self.in_ch * self.k * self.k;
        let mut gin = want_input_grad.then(|| Tensor4::zeros(x.b, self.in_ch, x.h, x.w));

        let mut col = vec![0.0; kdim * n];
        let mut col_t = vec![0.0; n * kdim];
        let mut gcol = vec![0.0; if want_input_grad { kdim * n } else { 0 }];
        // Weights transposed to (kdim, out_ch) for the input-gradient GEMM.
        let w_t = if want_input_grad {
            let mut t = vec![0.0; kdim * self.out_ch];
            transpose(&self.weight, self.out_ch, kdim, &mut t);
            t
        } else {
            Vec::new()
        };

        for b in 0..x.b {
            let gblock = &gout.data[b * self.out_ch * n..(b + 1) * self.out_ch * n];
            for o in 0..self.out_ch {
                gbias[o] += gblock[o * n..(o + 1) * n].iter().sum::<f64>();
            }
            self.im2col(x, b, oh, ow, &mut col);
            transpose(&col, kdim, n, &mut col_t);
            // dW (out_ch, kdim) += dOut (out_ch, n) * col^T (n, kdim)
            gemm_acc(gweight, gblock, &col_t, self.out_ch, n, kdim);
            if let Some(g) = gin.as_mut() {
                gcol.fill(0.0);
                // dCol (kdim, n) = W^T (kdim, out_ch) * dOut (out_ch, n)
                gemm_acc(&mut gcol, &w_t, gblock, kdim, self.out_ch, n);
                self.col2im_add(g, b, oh, ow, &gcol);
            }
        }
        gin
    }
}

fn transpose(src: &[f64], rows: usize, cols: usize, dst: &mut [f64]) {
    for r in 0..rows {
        for (c, v) in src[r * cols..(r + 1) * cols].iter().enumerate() {
            dst[c * rows + r] = *v;
        }
    }
}

/// `C (m x n) += A (m x kdim) * B (kdim x n)`, all row-major. Register-blocked
/// 4x8 micro-kernel with a scalar tail path.
fn gemm_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, kdim: usize, n: usize) {
    const MR: usize = 4;
    const NR: usize = 8;
    debug_assert!(c.len() >= m * n && a.len() >= m * kdim && b.len() >= kdim * n);
    let mut mb = 0;
    while mb < m {
        let mr = MR.min(m - mb);
        let mut nb = 0;
        while nb < n {
            let nr = NR.min(n - nb);
            if mr == MR && nr == NR {
                let mut acc = [[0.0f64; NR]; MR];
                for kk in 0..kdim {
                    let bs: &[f64; NR] = b[kk * n + nb..kk * n + nb + NR].try_into().unwrap();
                    for (r, acc_row) in acc.iter_mut().enumerate() {
                        let av = a[(mb + r) * kdim + kk];
                        for (cell, bv) in acc_row.iter_mut().zip(bs) {
                            *cell += av * bv;
                        }
                    }
                }
                for (r, acc_row) in acc.iter().enumerate() {
                    let crow = &mut c[(mb + r) * n + nb..(mb + r) * n + nb + NR];
                    for (dst, v) in crow.iter_mut().zip(acc_row) {
                        *dst += v;
                    }
                }
            } else {
                for r in 0..mr {
                    for cc in 0..nr {
                        let mut acc = 0.0;
                        for kk in 0..kdim {
                            acc += a[(mb + r) * kdim + kk] * b[kk * n + nb + cc];
                        }
                        c[(mb + r) * n + nb + cc] += acc;
                    }
                }
            }
            nb += nr;
        }
        mb += mr;
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
    pub channels: usize,
}

pub struct BnCache {
    pub xhat: Tensor4,
    pub inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn init(channels: usize) -> Self {
        BatchNorm2d {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
            channels,
        }
    }

    /// Batch-statistics forward. Biased variance is used for both the batch
    /// normalization and the running update. `update_running` is off for
    /// finite-difference probes, which must leave the layer untouched.
    pub fn forward_train(&mut self, x: &Tensor4, update_running: bool) -> (Tensor4, BnCache) {
        assert_eq!(x.c, self.channels);
        let n = (x.b * x.h * x.w) as f64;
        let mut out = Tensor4::zeros(x.b, x.c, x.h, x.w);
        let mut xhat = Tensor4::zeros(x.b, x.c, x.h, x.w);
        let mut inv_std = vec![0.0; self.channels];
        for c in 0..self.channels {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for b in 0..x.b {
                for v in x.plane(b, c) {
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            let istd = 1.0 / mathf::sqrt(var + self.eps);
            inv_std[c] = istd;
            if update_running {
                self.running_mean[c] =
                    (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean;
                self.running_var[c] =
                    (1.0 - self.momentum) * self.running_var[c] + self.momentum * var;
            }
            for b in 0..x.b {
                let xp = x.plane(b, c);
                let hp = xhat.plane_mut(b, c);
                for (h, v) in hp.iter_mut().zip(xp) {
                    *h = (v - mean) * istd;
                }
            }
            let (g, be) = (self.gamma[c], self.beta[c]);
            for b in 0..x.b {
                let hp = xhat.plane(b, c);
                let op = out.plane_mut(b, c);
                for (o, h) in op.iter_mut().zip(hp) {
                    *o = g * h + be;
                }
            }
        }
        (out, BnCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, x: &Tensor4) -> Tensor4 {
        assert_eq!(x.c, self.channels);
        let mut out = Tensor4::zeros(x.b, x.c, x.h, x.w);
        for c in 0..self.channels {
            let istd = 1.0 / mathf::sqrt(self.running_var[c] + self.eps);
            let (mean, g, be) = (self.running_mean[c], self.gamma[c], self.beta[c]);
            for b in 0..x.b {
                let xp = x.plane(b, c);
                let op = out.plane_mut(b, c);
                for (o, v) in op.iter_mut().zip(xp) {
                    *o = g * (v - mean) * istd + be;
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        cache: &BnCache,
        gout: &Tensor4,
        ggamma: &mut [f64],
        gbeta: &mut [f64],
    ) -> Tensor4 {
        let n = (gout.b * gout.h * gout.w) as f64;
        let mut gin = Tensor4::zeros(gout.b, gout.c, gout.h, gout.w);
        for c in 0..self.channels {
            let mut sum_g = 0.0;
            let mut sum_gh = 0.0;
            for b in 0..gout.b {
                let gp = gout.plane(b, c);
                let hp = cache.xhat.plane(b, c);
                for (g, h) in gp.iter().zip(hp) {
                    sum_g += g;
                    sum_gh += g * h;
                }
            }
            ggamma[c] += sum_gh;
            gbeta[c] += sum_g;
            let scale = self.gamma[c] * cache.inv_std[c];
            let mean_g = sum_g / n;
            let mean_gh = sum_gh / n;
            for b in 0..gout.b {
                let gp = gout.plane(b, c);
                let hp = cache.xhat.plane(b, c);
                let ip = gin.plane_mut(b, c);
                for ((gi, g), h) in ip.iter_mut().zip(gp).zip(hp) {
                    *gi = scale * (g - mean_g - h * mean_gh);
                }
            }
        }
        gin
    }
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    let mut out = x.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Passes gradient where the forward output is strictly positive.
pub fn relu_backward(gout: &Tensor4, out: &Tensor4) -> Tensor4 {
    let mut gin = gout.clone();
    for (g, o) in gin.data.iter_mut().zip(&out.data) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
    gin
}

/// Tap table for 1-D bilinear interpolation with half-pixel centers
/// (source coordinate `(i + 0.5)/f - 0.5`, clamped at the borders).
fn bilinear_taps(out_len: usize, in_len: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    let mut taps = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let mut src = (i as f64 + 0.5) / factor as f64 - 0.5;
        if src < 0.0 {
            src = 0.0;
        }
        let i0 = (mathf::floor(src) as usize).min(in_len - 1);
        let i1 = (i0 + 1).min(in_len - 1);
        taps.push((i0, i1, src - i0 as f64));
    }
    taps
}

pub fn upsample_bilinear(x: &Tensor4, factor: usize) -> Tensor4 {
    if factor == 1 {
        return x.clone();
    }
    let (oh, ow) = (x.h * factor, x.w * factor);
    let ty = bilinear_taps(oh, x.h, factor);
    let tx = bilinear_taps(ow, x.w, factor);
    let mut out = Tensor4::zeros(x.b, x.c, oh, ow);
    for b in 0..x.b {
        for c in 0..x.c {
            let xp = x.plane(b, c);
            let op = out.plane_mut(b, c);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let r0 = &xp[y0 * x.w..y0 * x.w + x.w];
                let r1 = &xp[y1 * x.w..y1 * x.w + x.w];
                let orow = &mut op[oy * ow..oy * ow + ow];
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
                    let bot = r1[x0] * (1.0 - fx) + r1[x1] * fx;
                    orow[ox] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    out
}

/// Transpose of [`upsample_bilinear`]: scatters each output grad onto its
/// four source taps.
pub fn upsample_bilinear_backward(
    gout: &Tensor4,
    in_h: usize,
    in_w: usize,
    factor: usize,
) -> Tensor4 {
    if factor == 1 {
        return gout.clone();
    }
    let ty = bilinear_taps(gout.h, in_h, factor);
    let tx = bilinear_taps(gout.w, in_w, factor);
    let mut gin = Tensor4::zeros(gout.b, gout.c, in_h, in_w);
    for b in 0..gout.b {
        for c in 0..gout.c {
            let gp = gout.plane(b, c);
            let ip = gin.plane_mut(b, c);
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let grow = &gp[oy * gout.w..oy * gout.w + gout.w];
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let g = grow[ox];
                    ip[y0 * in_w + x0] += g * (1.0 - fy) * (1.0 - fx);
                    ip[y0 * in_w + x1] += g * (1.0 - fy) * fx;
                    ip[y1 * in_w + x0] += g * fy * (1.0 - fx);
                    ip[y1 * in_w + x1] += g * fy * fx;
                }
            }
        }
    }
    gin
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
        let mut g = Vec::with_capacity(x.len());
        let mut p = x.to_vec();
        for i in 0..x.len() {
            p[i] = x[i] + eps;
            let fp = f(&p);
            p[i] = x[i] - eps;
            let fm = f(&p);
            p[i] = x[i];
            g.push((fp - fm) / (2.0 * eps));
        }
        g
    }

    #[test]
    fn conv_identity_kernel_passes_through() {
        let mut rng = Rng::new(0);
        let mut conv = Conv2d::init(1, 1, 3, 1, 1, &mut rng);
        conv.weight = vec![0.0; 9];
        conv.weight[4] = 1.0; // center tap
        let x = Tensor4::from_vec(rng.normal_vec(16, 1.0), 1, 1, 4, 4);
        let y = conv.forward(&x);
        for (a, b) in x.data.iter().zip(&y.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_stride_two_halves_dims() {
        let mut rng = Rng::new(1);
        let conv = Conv2d::init(4, 3, 3, 2, 1, &mut rng);
        let x = Tensor4::from_vec(rng.normal_vec(3 * 8 * 8, 1.0), 1, 3, 8, 8);
        let y = conv.forward(&x);
        assert_eq!((y.h, y.w), (4, 4));
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = Rng::new(2);
        let conv = Conv2d::init(2, 2, 3, 2, 1, &mut rng);
        let x = Tensor4::from_vec(rng.normal_vec(2 * 2 * 6 * 6, 1.0), 2, 2, 6, 6);
        // Scalar objective: weighted sum of outputs with fixed weights.
        let coeff = rng.normal_vec(2 * 2 * 3 * 3, 1.0);
        let objective = |c: &Conv2d, x: &Tensor4| -> f64 {
            c.forward(x)
                .data
                .iter()
                .zip(&coeff)
                .map(|(a, b)| a * b)
                .sum()
        };
        let (oh, ow) = conv.out_dims(6, 6);
        let gout = Tensor4::from_vec(coeff.clone(), 2, 2, oh, ow);
        let mut gw = vec![0.0; conv.weight.len()];
        let mut gb = vec![0.0; conv.bias.len()];
        let gin = conv.backward(&x, &gout, &mut gw, &mut gb, true).unwrap();

        let mut f_w = |w: &[f64]| {
            let mut c = conv.clone();
            c.weight = w.to_vec();
            objective(&c, &x)
        };
        let fd_w = finite_diff(&mut f_w, &conv.weight, 1e-5);
        for (a, f) in gw.iter().zip(&fd_w) {
            assert!((a - f).abs() < 1e-6 * f.abs().max(1.0), "gw {a} vs {f}");
        }
        let mut f_x = |xv: &[f64]| {
            let xt = Tensor4::from_vec(xv.to_vec(), 2, 2, 6, 6);
            objective(&conv, &xt)
        };
        let fd_x = finite_diff(&mut f_x, &x.data, 1e-5);
        for (a, f) in gin.data.iter().zip(&fd_x) {
            assert!((a - f).abs() < 1e-6 * f.abs().max(1.0), "gin {a} vs {f}");
        }
    }

    #[test]
    fn batchnorm_normalizes_each_channel() {
        let mut rng = Rng::new(3);
        let mut bn = BatchNorm2d::init(3);
        let x = Tensor4::from_vec(rng.normal_vec(2 * 3 * 4 * 4, 2.0), 2, 3, 4, 4);
        let (y, _) = bn.forward_train(&x, true);
        let n = (2 * 4 * 4) as f64;
        for c in 0..3 {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for b in 0..2 {
                for v in y.plane(b, c) {
                    sum += v;
                    sq += v * v;
                }
            }
            assert!((sum / n).abs() < 1e-10);
            assert!((sq / n - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut rng = Rng::new(4);
        let mut bn = BatchNorm2d::init(2);
        let x = Tensor4::from_vec(rng.normal_vec(2 * 2 * 4 * 4, 1.0), 2, 2, 4, 4);
        for _ in 0..200 {
            bn.forward_train(&x, true); // running stats converge to batch stats
        }
        let (train_out, _) = bn.clone().forward_train(&x, false);
        let eval_out = bn.forward_eval(&x);
        for (a, b) in train_out.data.iter().zip(&eval_out.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let bn = BatchNorm2d::init(2);
        let x = Tensor4::from_vec(rng.normal_vec(2 * 2 * 3 * 3, 1.5), 2, 2, 3, 3);
        let coeff = rng.normal_vec(x.data.len(), 1.0);
        let mut f = |xv: &[f64]| {
            let xt = Tensor4::from_vec(xv.to_vec(), 2, 2, 3, 3);
            let (y, _) = bn.clone().forward_train(&xt, false);
            y.data.iter().zip(&coeff).map(|(a, b)| a * b).sum()
        };
        let fd = finite_diff(&mut f, &x.data, 1e-5);
        let (_, cache) = bn.clone().forward_train(&x, false);
        let gout = Tensor4::from_vec(coeff.clone(), 2, 2, 3, 3);
        let mut gg = vec![0.0; 2];
        let mut gb = vec![0.0; 2];
        let gin = bn.backward(&cache, &gout, &mut gg, &mut gb);
        for (a, f) in gin.data.iter().zip(&fd) {
            assert!((a - f).abs() < 1e-6 * f.abs().max(1.0), "{a} vs {f}");
        }
    }

    #[test]
    fn bilinear_upsample_preserves_constants_and_transposes() {
        let x = Tensor4::from_vec(vec![3.0; 2 * 2], 1, 1, 2, 2);
        let y = upsample_bilinear(&x, 4);
        assert!(y.data.iter().all(|&v| (v - 3.0).abs() < 1e-12));

        // <up(x), g> == <x, up^T(g)> for random x, g.
        let mut rng = Rng::new(6);
        let x = Tensor4::from_vec(rng.normal_vec(2 * 3 * 3, 1.0), 1, 2, 3, 3);
        let g = Tensor4::from_vec(rng.normal_vec(2 * 6 * 6, 1.0), 1, 2, 6, 6);
        let up = upsample_bilinear(&x, 2);
        let down = upsample_bilinear_backward(&g, 3, 3, 2);
        let lhs: f64 = up.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&down.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}

//! Layer primitives with hand-written forward and backward passes.
//!
//! Every backward takes the upstream gradient and returns the input gradient
//! while accumulating parameter gradients into caller-provided slices, so a
//! whole-network backward is a single reverse walk over cached activations.
//! Activations (ELU, sigmoid) differentiate from their own outputs, which is
//! all the cache has to hold.

use super::tensor::{col2im, conv_out_hw, gemm_strided, im2col, Tensor};
use crate::error::CoreError;
use crate::Result;

/// Shape and geometry of one convolution; weights live externally as
/// `[out_ch, in_ch, k, k]` row-major plus one bias per output channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn same3(in_ch: usize, out_ch: usize) -> ConvSpec {
        ConvSpec {
            in_ch,
            out_ch,
            k: 3,
            stride: 1,
            dilation: 1,
            pad: 1,
        }
    }

    pub fn point(in_ch: usize, out_ch: usize) -> ConvSpec {
        ConvSpec {
            in_ch,
            out_ch,
            k: 1,
            stride: 1,
            dilation: 1,
            pad: 0,
        }
    }

    pub fn dilated3(in_ch: usize, out_ch: usize, dilation: usize) -> ConvSpec {
        ConvSpec {
            in_ch,
            out_ch,
            k: 3,
            stride: 1,
            dilation,
            pad: dilation,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.k * self.k
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        conv_out_hw(h, w, self.k, self.stride, self.dilation, self.pad)
    }

    pub fn forward(&self, x: &Tensor, w: &[f64], b: &[f64]) -> Tensor {
        debug_assert_eq!(x.channels, self.in_ch);
        debug_assert_eq!(w.len(), self.weight_len());
        debug_assert_eq!(b.len(), self.out_ch);
        let mut cols = Vec::new();
        let (oh, ow) = im2col(x, self.k, self.stride, self.dilation, self.pad, &mut cols);
        let n_sp = oh * ow;
        let mut out = Tensor::zeros(self.out_ch, oh, ow);
        for (oc, bias) in b.iter().enumerate() {
            out.data[oc * n_sp..(oc + 1) * n_sp].fill(*bias);
        }
        let kk = self.in_ch * self.k * self.k;
        gemm_strided(
            self.out_ch,
            kk,
            n_sp,
            w,
            kk as isize,
            1,
            &cols,
            n_sp as isize,
            1,
            1.0,
            &mut out.data,
        );
        out
    }

    /// Returns `d_input`; adds this call's contribution into `dw` and `db`.
    pub fn backward(
        &self,
        x: &Tensor,
        w: &[f64],
        d_out: &Tensor,
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Tensor {
        let (oh, ow) = self.out_hw(x.height, x.width);
        debug_assert_eq!((d_out.height, d_out.width), (oh, ow));
        let n_sp = oh * ow;
        let kk = self.in_ch * self.k * self.k;
        let mut cols = Vec::new();
        im2col(x, self.k, self.stride, self.dilation, self.pad, &mut cols);
        // dW[oc, kk] += dOut[oc, n] * cols^T[n, kk]
        gemm_strided(
            self.out_ch,
            n_sp,
            kk,
            &d_out.data,
            n_sp as isize,
            1,
            &cols,
            1,
            n_sp as isize,
            1.0,
            dw,
        );
        for oc in 0..self.out_ch {
            db[oc] += d_out.data[oc * n_sp..(oc + 1) * n_sp].iter().sum::<f64>();
        }
        // dCols[kk, n] = W^T[kk, oc] * dOut[oc, n]
        let mut dcols = vec![0.0; kk * n_sp];
        gemm_strided(
            kk,
            self.out_ch,
            n_sp,
            w,
            1,
            kk as isize,
            &d_out.data,
            n_sp as isize,
            1,
            0.0,
            &mut dcols,
        );
        col2im(
            &dcols,
            self.in_ch,
            x.height,
            x.width,
            self.k,
            self.stride,
            self.dilation,
            self.pad,
        )
    }
}

/// 2x2 stride-2 transposed convolution (exact 2x upsample, no tap overlap);
/// weights `[in_ch, out_ch, 2, 2]` row-major, one bias per output channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvT2Spec {
    pub in_ch: usize,
    pub out_ch: usize,
}

impl ConvT2Spec {
    pub fn weight_len(&self) -> usize {
        self.in_ch * self.out_ch * 4
    }

    /// Each output pixel sees exactly one input pixel per input channel.
    pub fn fan_in(&self) -> usize {
        self.in_ch
    }

    pub fn forward(&self, x: &Tensor, w: &[f64], b: &[f64]) -> Tensor {
        debug_assert_eq!(x.channels, self.in_ch);
        let (oh, ow) = (2 * x.height, 2 * x.width);
        let mut out = Tensor::zeros(self.out_ch, oh, ow);
        for (oc, bias) in b.iter().enumerate() {
            out.data[oc * oh * ow..(oc + 1) * oh * ow].fill(*bias);
        }
        for ic in 0..self.in_ch {
            let xp = &x.data[ic * x.plane()..(ic + 1) * x.plane()];
            for oc in 0..self.out_ch {
                let wbase = (ic * self.out_ch + oc) * 4;
                let taps = [w[wbase], w[wbase + 1], w[wbase + 2], w[wbase + 3]];
                let op = &mut out.data[oc * oh * ow..(oc + 1) * oh * ow];
                for ih in 0..x.height {
                    let src = ih * x.width;
                    let dst0 = (2 * ih) * ow;
                    let dst1 = dst0 + ow;
                    for iw in 0..x.width {
                        let v = xp[src + iw];
                        op[dst0 + 2 * iw] += v * taps[0];
                        op[dst0 + 2 * iw + 1] += v * taps[1];
                        op[dst1 + 2 * iw] += v * taps[2];
                        op[dst1 + 2 * iw + 1] += v * taps[3];
                    }
                }
            }
        }
        out
    }

    pub fn backward(
        &self,
        x: &Tensor,
        w: &[f64],
        d_out: &Tensor,
        dw: &mut [f64],
        db: &mut [f64],
    ) -> Tensor {
        let (oh, ow) = (2 * x.height, 2 * x.width);
        debug_assert_eq!((d_out.height, d_out.width), (oh, ow));
        for oc in 0..self.out_ch {
            db[oc] += d_out.data[oc * oh * ow..(oc + 1) * oh * ow]
                .iter()
                .sum::<f64>();
        }
        let mut dx = Tensor::zeros(self.in_ch, x.height, x.width);
        for ic in 0..self.in_ch {
            let xp = &x.data[ic * x.plane()..(ic + 1) * x.plane()];
            let dxp = &mut dx.data[ic * x.plane()..(ic + 1) * x.plane()];
            for oc in 0..self.out_ch {
                let wbase = (ic * self.out_ch + oc) * 4;
                let taps = [w[wbase], w[wbase + 1], w[wbase + 2], w[wbase + 3]];
                let mut dtaps = [0.0f64; 4];
                let dp = &d_out.data[oc * oh * ow..(oc + 1) * oh * ow];
                for ih in 0..x.height {
                    let src = ih * x.width;
                    let dst0 = (2 * ih) * ow;
                    let dst1 = dst0 + ow;
                    for iw in 0..x.width {
                        let g = [
                            dp[dst0 + 2 * iw],
                            dp[dst0 + 2 * iw + 1],
                            dp[dst1 + 2 * iw],
                            dp[dst1 + 2 * iw + 1],
                        ];
                        let v = xp[src + iw];
                        dxp[src + iw] +=
                            g[0] * taps[0] + g[1] * taps[1] + g[2] * taps[2] + g[3] * taps[3];
                        dtaps[0] += g[0] * v;
                        dtaps[1] += g[1] * v;
                        dtaps[2] += g[2] * v;
                        dtaps[3] += g[3] * v;
                    }
                }
                for t in 0..4 {
                    dw[wbase + t] += dtaps[t];
                }
            }
        }
        dx
    }
}

/// 2x2 stride-2 max pooling; returns the pooled tensor and per-output argmax
/// (flat index into the input plane) for backward routing.
pub fn maxpool2(x: &Tensor) -> (Tensor, Vec<u32>) {
    assert!(x.height % 2 == 0 && x.width % 2 == 0);
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut out = Tensor::zeros(x.channels, oh, ow);
    let mut arg = vec![0u32; x.channels * oh * ow];
    for c in 0..x.channels {
        let xp = &x.data[c * x.plane()..(c + 1) * x.plane()];
        for r in 0..oh {
            for q in 0..ow {
                let base = (2 * r) * x.width + 2 * q;
                let cand = [base, base + 1, base + x.width, base + x.width + 1];
                let mut best = cand[0];
                for &i in &cand[1..] {
                    if xp[i] > xp[best] {
                        best = i;
                    }
                }
                out.data[c * oh * ow + r * ow + q] = xp[best];
                arg[c * oh * ow + r * ow + q] = best as u32;
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward(d_out: &Tensor, arg: &[u32], in_h: usize, in_w: usize) -> Tensor {
    let mut dx = Tensor::zeros(d_out.channels, in_h, in_w);
    let plane = in_h * in_w;
    let oplane = d_out.plane();
    for c in 0..d_out.channels {
        for i in 0..oplane {
            dx.data[c * plane + arg[c * oplane + i] as usize] += d_out.data[c * oplane + i];
        }
    }
    dx
}

/// ELU (alpha = 1): smooth at zero, so finite-difference checks stay clean.
pub fn elu_inplace(t: &mut Tensor) {
    for v in &mut t.data {
        if *v < 0.0 {
            *v = v.exp() - 1.0;
        }
    }
}

/// ELU derivative recovered from the output: y > 0 -> 1, else y + 1 = e^x.
pub fn elu_grad_from_output(y: &Tensor, d: &mut Tensor) {
    debug_assert_eq!(y.len(), d.len());
    for (g, &out) in d.data.iter_mut().zip(&y.data) {
        if out < 0.0 {
            *g *= out + 1.0;
        }
    }
}

pub fn sigmoid_inplace(t: &mut Tensor) {
    for v in &mut t.data {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
}

pub fn sigmoid_grad_from_output(y: &Tensor, d: &mut Tensor) {
    debug_assert_eq!(y.len(), d.len());
    for (g, &out) in d.data.iter_mut().zip(&y.data) {
        *g *= out * (1.0 - out);
    }
}

/// Mean squared error over masked cells: `sum_mask (pred - target)^2 / |mask|`.
/// Returns the loss and `d loss / d pred`.
pub fn masked_mse(pred: &[f64], target: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(CoreError::invalid(format!(
            "masked mse shape mismatch: pred {}, target {}, mask {}",
            pred.len(),
            target.len(),
            mask.len()
        )));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(CoreError::invalid("loss mask has no active cells"));
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        if mask[i] {
            let e = pred[i] - target[i];
            loss += e * e * scale;
            grad[i] = 2.0 * e * scale;
        }
    }
    Ok((loss, grad))
}


/// Direct six-loop convolution; the independent reference the GEMM path and
/// the gradient tests are checked against. Test-only.
#[cfg(test)]
pub(crate) fn tests_naive_conv(spec: &ConvSpec, x: &Tensor, w: &[f64], b: &[f64]) -> Tensor {
    let (oh, ow) = spec.out_hw(x.height, x.width);
    let mut out = Tensor::zeros(spec.out_ch, oh, ow);
    for oc in 0..spec.out_ch {
        for r in 0..oh {
            for q in 0..ow {
                let mut acc = b[oc];
                for ic in 0..spec.in_ch {
                    for kr in 0..spec.k {
                        for kc in 0..spec.k {
                            let ih =
                                (r * spec.stride + kr * spec.dilation) as isize - spec.pad as isize;
                            let iw =
                                (q * spec.stride + kc * spec.dilation) as isize - spec.pad as isize;
                            if ih >= 0
                                && iw >= 0
                                && (ih as usize) < x.height
                                && (iw as usize) < x.width
                            {
                                let xi = (ic * x.height + ih as usize) * x.width + iw as usize;
                                let wi = ((oc * spec.in_ch + ic) * spec.k + kr) * spec.k + kc;
                                acc += x.data[xi] * w[wi];
                            }
                        }
                    }
                }
                out.data[(oc * oh + r) * ow + q] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn rng(label: &str) -> ChaCha8Rng {
        crate::rng::stream_rng(0x4c41_5945, label, 0)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    use super::tests_naive_conv as naive_conv;

    #[test]
    fn conv_matches_naive_reference() {
        let mut r = rng("conv-ref");
        for spec in [
            ConvSpec::same3(3, 4),
            ConvSpec::point(5, 2),
            ConvSpec::dilated3(2, 3, 2),
            ConvSpec::dilated3(2, 2, 4),
            ConvSpec {
                in_ch: 3,
                out_ch: 4,
                k: 3,
                stride: 2,
                dilation: 1,
                pad: 1,
            },
        ] {
            let x = Tensor::from_vec(spec.in_ch, 8, 8, rand_vec(&mut r, spec.in_ch * 64));
            let w = rand_vec(&mut r, spec.weight_len());
            let b = rand_vec(&mut r, spec.out_ch);
            let fast = spec.forward(&x, &w, &b);
            let slow = naive_conv(&spec, &x, &w, &b);
            assert_eq!(fast.data.len(), slow.data.len());
            for (f, s) in fast.data.iter().zip(&slow.data) {
                assert!((f - s).abs() < 1e-12, "{spec:?}: {f} vs {s}");
            }
        }
    }

    fn scalar_loss(t: &Tensor, probe: &[f64]) -> f64 {
        t.data.iter().zip(probe).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut r = rng("conv-grad");
        for spec in [
            ConvSpec::same3(2, 3),
            ConvSpec::dilated3(2, 2, 2),
            ConvSpec {
                in_ch: 2,
                out_ch: 2,
                k: 3,
                stride: 2,
                dilation: 1,
                pad: 1,
            },
        ] {
            let x = Tensor::from_vec(spec.in_ch, 6, 6, rand_vec(&mut r, spec.in_ch * 36));
            let mut w = rand_vec(&mut r, spec.weight_len());
            let b = rand_vec(&mut r, spec.out_ch);
            let (oh, ow) = spec.out_hw(6, 6);
            let probe = rand_vec(&mut r, spec.out_ch * oh * ow);

            let mut d_out = Tensor::from_vec(spec.out_ch, oh, ow, probe.clone());
            d_out.data.copy_from_slice(&probe);
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; b.len()];
            let dx = spec.backward(&x, &w, &d_out, &mut dw, &mut db);

            let mut fw = |ws: &[f64]| scalar_loss(&spec.forward(&x, ws, &b), &probe);
            fd::check_grad(&mut fw, &mut w, &dw, 1e-3, 1e-2);

            let mut xs = x.data.clone();
            let mut fx = |xv: &[f64]| {
                let xt = Tensor::from_vec(spec.in_ch, 6, 6, xv.to_vec());
                scalar_loss(&spec.forward(&xt, &w, &b), &probe)
            };
            fd::check_grad(&mut fx, &mut xs, &dx.data, 1e-3, 1e-2);

            let mut bs = b.clone();
            let mut fb = |bv: &[f64]| scalar_loss(&spec.forward(&x, &w, bv), &probe);
            fd::check_grad(&mut fb, &mut bs, &db, 1e-3, 1e-2);
        }
    }

    #[test]
    fn transposed_conv_gradients_match_finite_differences() {
        let mut r = rng("convt-grad");
        let spec = ConvT2Spec { in_ch: 3, out_ch: 2 };
        let x = Tensor::from_vec(3, 4, 4, rand_vec(&mut r, 48));
        let mut w = rand_vec(&mut r, spec.weight_len());
        let b = rand_vec(&mut r, 2);
        let probe = rand_vec(&mut r, 2 * 8 * 8);

        let up = spec.forward(&x, &w, &b);
        assert_eq!((up.channels, up.height, up.width), (2, 8, 8));

        let d_out = Tensor::from_vec(2, 8, 8, probe.clone());
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; 2];
        let dx = spec.backward(&x, &w, &d_out, &mut dw, &mut db);

        let mut fw = |ws: &[f64]| scalar_loss(&spec.forward(&x, ws, &b), &probe);
        fd::check_grad(&mut fw, &mut w, &dw, 1e-3, 1e-2);

        let mut xs = x.data.clone();
        let mut fx = |xv: &[f64]| {
            let xt = Tensor::from_vec(3, 4, 4, xv.to_vec());
            scalar_loss(&spec.forward(&xt, &w, &b), &probe)
        };
        fd::check_grad(&mut fx, &mut xs, &dx.data, 1e-3, 1e-2);

        let mut bs = b.clone();
        let mut fb = |bv: &[f64]| scalar_loss(&spec.forward(&x, &w, bv), &probe);
        fd::check_grad(&mut fb, &mut bs, &db, 1e-3, 1e-2);
    }

    #[test]
    fn maxpool_routes_gradient_to_the_argmax() {
        let mut r = rng("pool-grad");
        let x = Tensor::from_vec(2, 6, 6, rand_vec(&mut r, 72));
        let probe = rand_vec(&mut r, 2 * 9);
        let (y, arg) = maxpool2(&x);
        assert_eq!((y.height, y.width), (3, 3));
        let d_out = Tensor::from_vec(2, 3, 3, probe.clone());
        let dx = maxpool2_backward(&d_out, &arg, 6, 6);

        let mut xs = x.data.clone();
        let mut f = |xv: &[f64]| {
            let xt = Tensor::from_vec(2, 6, 6, xv.to_vec());
            scalar_loss(&maxpool2(&xt).0, &probe)
        };
        fd::check_grad(&mut f, &mut xs, &dx.data, 1e-3, 1e-2);
    }

    #[test]
    fn activation_gradients_match_finite_differences() {
        let mut r = rng("act-grad");
        let x = Tensor::from_vec(1, 4, 4, rand_vec(&mut r, 16));
        let probe = rand_vec(&mut r, 16);

        for sig in [false, true] {
            let mut y = x.clone();
            if sig {
                sigmoid_inplace(&mut y);
            } else {
                elu_inplace(&mut y);
            }
            let mut d = Tensor::from_vec(1, 4, 4, probe.clone());
            if sig {
                sigmoid_grad_from_output(&y, &mut d);
            } else {
                elu_grad_from_output(&y, &mut d);
            }
            let mut xs = x.data.clone();
            let mut f = |xv: &[f64]| {
                let mut t = Tensor::from_vec(1, 4, 4, xv.to_vec());
                if sig {
                    sigmoid_inplace(&mut t);
                } else {
                    elu_inplace(&mut t);
                }
                scalar_loss(&t, &probe)
            };
            fd::check_grad(&mut f, &mut xs, &d.data, 1e-3, 1e-2);
        }
    }

    #[test]
    fn masked_mse_follows_its_definition() {
        let pred = [0.2, 0.8, 0.5, 0.1];
        let target = [0.0, 0.8, 0.9, 0.3];
        let mask = [true, true, false, true];
        let (loss, grad) = masked_mse(&pred, &target, &mask).unwrap();
        let want = (0.2f64.powi(2) + 0.0 + 0.2f64.powi(2)) / 3.0;
        assert!((loss - want).abs() < 1e-15);
        assert_eq!(grad[2], 0.0);
        assert!((grad[0] - 2.0 * 0.2 / 3.0).abs() < 1e-15);
        assert!((grad[3] - 2.0 * (-0.2) / 3.0).abs() < 1e-15);

        let (zero, _) = masked_mse(&target, &target, &mask).unwrap();
        assert_eq!(zero, 0.0);
        assert!(masked_mse(&pred, &target, &[false; 4]).is_err());
        assert!(masked_mse(&pred, &target[..3], &mask[..3]).is_err());
    }
}

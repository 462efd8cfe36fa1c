//! Differentiable building blocks operating on flat parameter slices.
//!
//! Each layer only records offsets into the network's parameter vector, so a
//! whole network is a `Vec<f64>` plus a description of where things live.

use crate::numerics::{Rng, Tensor3};

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Binary cross-entropy on a log-odds value; returns (loss, dloss/dz).
#[inline]
pub fn logistic_loss(z: f64, positive: bool) -> (f64, f64) {
    let y = if positive { 1.0 } else { 0.0 };
    (softplus(z) - y * z, sigmoid(z) - y)
}

pub fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the (post-activation) `out` is not positive.
pub fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, &o) in grad.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Allocates consecutive parameter ranges.
#[derive(Debug, Default)]
pub struct ParamLayout {
    next: usize,
}

impl ParamLayout {
    pub fn take(&mut self, n: usize) -> usize {
        let at = self.next;
        self.next += n;
        at
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

/// Fills `w` from `U(-a, a)` with `a = sqrt(gain / fan_in)`: gain 6 for ReLU
/// layers, 3 for linear/sigmoid/tanh ones.
pub fn init_uniform(w: &mut [f64], fan_in: usize, gain: f64, rng: &mut Rng) {
    let a = (gain / fan_in.max(1) as f64).sqrt();
    for x in w {
        *x = rng.uniform_range(-a, a);
    }
}

pub const RELU_GAIN: f64 = 6.0;
pub const LINEAR_GAIN: f64 = 3.0;

/// Inverted dropout. Returns the mask (already scaled) so the backward pass
/// can reuse it.
pub fn dropout(x: &mut [f64], rate: f64, rng: Option<&mut Rng>) -> Option<Vec<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..x.len()).map(|_| if rng.uniform() < keep { 1.0 / keep } else { 0.0 }).collect();
    for (v, m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    w: usize,
    b: usize,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, layout: &mut ParamLayout) -> Self {
        let w = layout.take(inputs * outputs);
        let b = layout.take(outputs);
        Dense { inputs, outputs, w, b }
    }

    pub fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.inputs * self.outputs]
    }

    pub fn init(&self, p: &mut [f64], gain: f64, rng: &mut Rng) {
        init_uniform(&mut p[self.w..self.w + self.inputs * self.outputs], self.inputs, gain, rng);
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let w = self.weights(p);
        (0..self.outputs)
            .map(|o| {
                let row = &w[o * self.inputs..(o + 1) * self.inputs];
                p[self.b + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let w = self.weights(p);
        let mut dx = vec![0.0; self.inputs];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[self.b + o] += g;
            let gw = &mut grad[self.w + o * self.inputs..self.w + (o + 1) * self.inputs];
            for (gw, &xi) in gw.iter_mut().zip(x) {
                *gw += g * xi;
            }
            for (d, &wi) in dx.iter_mut().zip(&w[o * self.inputs..(o + 1) * self.inputs]) {
                *d += g * wi;
            }
        }
        dx
    }

    /// Sum of squared weights (biases excluded) and its gradient scaled by `scale`.
    pub fn l2(&self, p: &[f64], grad: Option<&mut [f64]>, scale: f64) -> f64 {
        let w = self.weights(p);
        if let Some(g) = grad {
            for (g, &wi) in g[self.w..self.w + w.len()].iter_mut().zip(w) {
                *g += scale * 2.0 * wi;
            }
        }
        w.iter().map(|v| v * v).sum()
    }
}

/// 2-D cross-correlation with bias, square kernel, stride and zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    w: usize,
    b: usize,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize, layout: &mut ParamLayout) -> Self {
        let w = layout.take(out_channels * in_channels * kernel * kernel);
        let b = layout.take(out_channels);
        Conv2d { in_channels, out_channels, kernel, stride, pad, w, b }
    }

    fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn n_weights(&self) -> usize {
        self.out_channels * self.fan_in()
    }

    pub fn init(&self, p: &mut [f64], gain: f64, rng: &mut Rng) {
        init_uniform(&mut p[self.w..self.w + self.n_weights()], self.fan_in(), gain, rng);
    }

    pub fn scale_weights(&self, p: &mut [f64], factor: f64) {
        for v in &mut p[self.w..self.w + self.n_weights()] {
            *v *= factor;
        }
    }

    /// Output spatial size, or `None` if the kernel does not fit.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let dim = |n: usize| (n + 2 * self.pad).checked_sub(self.kernel).map(|r| r / self.stride + 1);
        Some((dim(h)?, dim(w)?))
    }

    /// Valid output columns `ox` for kernel column `kx`: those with
    /// `0 <= ox*stride + kx - pad < width`.
    fn valid_range(&self, k: usize, n_in: usize, n_out: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = k as isize - self.pad as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi = if n_in as isize - off <= 0 { 0 } else { ((n_in as isize - off - 1) / s + 1).min(n_out as isize) };
        (lo as usize, (hi.max(lo)) as usize)
    }

    pub fn forward(&self, p: &[f64], x: &Tensor3) -> Tensor3 {
        let (oh, ow) = self.output_size(x.height, x.width).expect("conv shape checked at construction");
        let mut out = Tensor3::zeros(self.out_channels, oh, ow);
        let k = self.kernel;
        let s = self.stride;
        for oc in 0..self.out_channels {
            let bias = p[self.b + oc];
            let plane = &mut out.data[oc * oh * ow..(oc + 1) * oh * ow];
            plane.fill(bias);
            for ic in 0..self.in_channels {
                let xin = x.channel(ic);
                for ky in 0..k {
                    let (oy0, oy1) = self.valid_range(ky, x.height, oh);
                    for kx in 0..k {
                        let wv = p[self.w + ((oc * self.in_channels + ic) * k + ky) * k + kx];
                        let (ox0, ox1) = self.valid_range(kx, x.width, ow);
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - self.pad;
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            let irow = &xin[iy * x.width..(iy + 1) * x.width];
                            if s == 1 {
                                let ix0 = ox0 + kx - self.pad;
                                for (o, i) in orow[ox0..ox1].iter_mut().zip(&irow[ix0..ix0 + (ox1 - ox0)]) {
                                    *o += wv * i;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    orow[ox] += wv * irow[ox * s + kx - self.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub fn backward(&self, p: &[f64], x: &Tensor3, dy: &Tensor3, grad: &mut [f64]) -> Tensor3 {
        let (oh, ow) = (dy.height, dy.width);
        let mut dx = Tensor3::zeros(x.channels, x.height, x.width);
        let k = self.kernel;
        let s = self.stride;
        for oc in 0..self.out_channels {
            let gplane = dy.channel(oc);
            grad[self.b + oc] += gplane.iter().sum::<f64>();
            for ic in 0..self.in_channels {
                let xin = x.channel(ic);
                let dxin = &mut dx.data[ic * x.height * x.width..(ic + 1) * x.height * x.width];
                for ky in 0..k {
                    let (oy0, oy1) = self.valid_range(ky, x.height, oh);
                    for kx in 0..k {
                        let wi = self.w + ((oc * self.in_channels + ic) * k + ky) * k + kx;
                        let wv = p[wi];
                        let (ox0, ox1) = self.valid_range(kx, x.width, ow);
                        let mut gw = 0.0;
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - self.pad;
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            let irow = &xin[iy * x.width..(iy + 1) * x.width];
                            let drow = &mut dxin[iy * x.width..(iy + 1) * x.width];
                            if s == 1 {
                                let ix0 = ox0 + kx - self.pad;
                                let n = ox1 - ox0;
                                for ((g, i), d) in grow[ox0..ox1].iter().zip(&irow[ix0..ix0 + n]).zip(&mut drow[ix0..ix0 + n]) {
                                    gw += g * i;
                                    *d += wv * g;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    let ix = ox * s + kx - self.pad;
                                    gw += grow[ox] * irow[ix];
                                    drow[ix] += wv * grow[ox];
                                }
                            }
                        }
                        grad[wi] += gw;
                    }
                }
            }
        }
        dx
    }
}

/// Max pooling; out-of-bounds (padded) cells never win.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl MaxPool {
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let dim = |n: usize| (n + 2 * self.pad).checked_sub(self.kernel).map(|r| r / self.stride + 1);
        let (oh, ow) = (dim(h)?, dim(w)?);
        (oh > 0 && ow > 0).then_some((oh, ow))
    }

    /// Returns the pooled tensor and, per output cell, the flat input index that won.
    pub fn forward(&self, x: &Tensor3) -> (Tensor3, Vec<usize>) {
        let (oh, ow) = self.output_size(x.height, x.width).expect("pool shape checked at construction");
        let mut out = Tensor3::zeros(x.channels, oh, ow);
        let mut arg = vec![0; out.len()];
        for c in 0..x.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for ky in 0..self.kernel {
                        let Some(iy) = (oy * self.stride + ky).checked_sub(self.pad).filter(|&v| v < x.height) else { continue };
                        for kx in 0..self.kernel {
                            let Some(ix) = (ox * self.stride + kx).checked_sub(self.pad).filter(|&v| v < x.width) else { continue };
                            let i = x.idx(c, iy, ix);
                            if x.data[i] > best || best_i == usize::MAX {
                                best = x.data[i];
                                best_i = i;
                            }
                        }
                    }
                    let o = out.idx(c, oy, ox);
                    out.data[o] = best;
                    arg[o] = best_i;
                }
            }
        }
        (out, arg)
    }

    pub fn backward(input_shape: [usize; 3], arg: &[usize], dy: &Tensor3) -> Tensor3 {
        let mut dx = Tensor3::zeros(input_shape[0], input_shape[1], input_shape[2]);
        for (&i, &g) in arg.iter().zip(&dy.data) {
            dx.data[i] += g;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(c: &Conv2d, p: &[f64], x: &Tensor3) -> Tensor3 {
        let (oh, ow) = c.output_size(x.height, x.width).unwrap();
        let mut out = Tensor3::zeros(c.out_channels, oh, ow);
        for oc in 0..c.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p[c.b + oc];
                    for ic in 0..c.in_channels {
                        for ky in 0..c.kernel {
                            for kx in 0..c.kernel {
                                let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                                let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                                if iy < 0 || ix < 0 || iy >= x.height as isize || ix >= x.width as isize {
                                    continue;
                                }
                                let w = p[c.w + ((oc * c.in_channels + ic) * c.kernel + ky) * c.kernel + kx];
                                acc += w * x.data[x.idx(ic, iy as usize, ix as usize)];
                            }
                        }
                    }
                    let o = out.idx(oc, oy, ox);
                    out.data[o] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = Rng::new(5);
        for &(k, s, pad) in &[(3, 1, 0), (3, 1, 1), (7, 2, 3), (1, 2, 0), (3, 2, 1), (2, 1, 0)] {
            let mut layout = ParamLayout::default();
            let c = Conv2d::new(2, 3, k, s, pad, &mut layout);
            let p: Vec<f64> = (0..layout.total()).map(|_| rng.standard_normal()).collect();
            let mut x = Tensor3::zeros(2, 9, 11);
            x.data.iter_mut().for_each(|v| *v = rng.standard_normal());
            let a = c.forward(&p, &x);
            let b = naive_conv(&c, &p, &x);
            assert_eq!(a.shape(), b.shape());
            for (u, v) in a.data.iter().zip(&b.data) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pooling_shapes() {
        let p = MaxPool { kernel: 3, stride: 2, pad: 1 };
        assert_eq!(p.output_size(25, 59), Some((13, 30)));
        let q = MaxPool { kernel: 2, stride: 2, pad: 0 };
        assert_eq!(q.output_size(7, 7), Some((3, 3)));
        assert_eq!(q.output_size(1, 7), None);
    }

    #[test]
    fn stable_logistic() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(softplus(800.0).is_finite() && softplus(-800.0) >= 0.0);
        let (l, g) = logistic_loss(0.0, true);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15 && (g + 0.5).abs() < 1e-15);
    }
}

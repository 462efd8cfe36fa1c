//! Network definitions: linear (LR/SVM), MLP, CNN and LSTM.
//!
//! Every network maps one flattened, standardized example to a scalar score:
//! the positive-class log-odds (or the raw margin for the SVM). Two-way
//! softmax heads report `z_pos - z_neg`, whose sigmoid is the softmax output.

use super::layers::{
    dropout, logistic_loss, relu_backward, relu_inplace, sigmoid, Conv2d, Dense, MaxPool, ParamLayout, LINEAR_GAIN,
    RELU_GAIN,
};
use crate::numerics::{Rng, Tensor3};

pub trait Network: Send + Sync {
    fn n_params(&self) -> usize;

    /// Flattened example length.
    fn input_len(&self) -> usize;

    fn init(&self, rng: &mut Rng) -> Vec<f64>;

    fn score(&self, p: &[f64], x: &[f64]) -> f64;

    /// Loss on one example; adds its gradient into `grad`. `drop` enables dropout.
    fn loss_grad(&self, p: &[f64], x: &[f64], positive: bool, drop: Option<&mut Rng>, grad: &mut [f64]) -> f64;

    /// Regularisation for a training set of `n` examples (gradient added into `grad`).
    fn penalty(&self, _p: &[f64], _n: usize, _grad: Option<&mut [f64]>) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearLoss {
    /// Cross-entropy plus `(l1 |w|_1 + l2/2 |w|^2) / (c n)`.
    Logistic { c: f64, l1: f64, l2: f64 },
    /// Hinge plus `|w|^2 / (2 c n)`.
    Hinge { c: f64 },
}

#[derive(Debug, Clone)]
pub struct LinearNet {
    pub dim: usize,
    pub loss: LinearLoss,
}

impl Network for LinearNet {
    fn n_params(&self) -> usize {
        self.dim + 1
    }

    fn input_len(&self) -> usize {
        self.dim
    }

    fn init(&self, _rng: &mut Rng) -> Vec<f64> {
        vec![0.0; self.dim + 1]
    }

    fn score(&self, p: &[f64], x: &[f64]) -> f64 {
        p[self.dim] + p[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    fn loss_grad(&self, p: &[f64], x: &[f64], positive: bool, _drop: Option<&mut Rng>, grad: &mut [f64]) -> f64 {
        let z = self.score(p, x);
        let (loss, dz) = match self.loss {
            LinearLoss::Logistic { .. } => logistic_loss(z, positive),
            LinearLoss::Hinge { .. } => {
                let y = if positive { 1.0 } else { -1.0 };
                if y * z < 1.0 {
                    (1.0 - y * z, -y)
                } else {
                    (0.0, 0.0)
                }
            }
        };
        if dz != 0.0 {
            for (g, v) in grad[..self.dim].iter_mut().zip(x) {
                *g += dz * v;
            }
            grad[self.dim] += dz;
        }
        loss
    }

    fn penalty(&self, p: &[f64], n: usize, grad: Option<&mut [f64]>) -> f64 {
        let w = &p[..self.dim];
        let n = n.max(1) as f64;
        let (l1, l2, c) = match self.loss {
            LinearLoss::Logistic { c, l1, l2 } => (l1, l2, c),
            LinearLoss::Hinge { c } => (0.0, 1.0, c),
        };
        let scale = 1.0 / (c * n);
        if let Some(g) = grad {
            for (g, &wi) in g[..self.dim].iter_mut().zip(w) {
                *g += scale * (l1 * wi.signum() * (wi != 0.0) as u8 as f64 + l2 * wi);
            }
        }
        scale * (l1 * w.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>())
    }
}

/// One ReLU hidden layer and a sigmoid output.
#[derive(Debug, Clone)]
pub struct MlpNet {
    hidden: Dense,
    out: Dense,
    l2: f64,
    n_params: usize,
}

impl MlpNet {
    pub fn new(dim: usize, hidden_units: usize, l2: f64) -> Self {
        let mut layout = ParamLayout::default();
        let hidden = Dense::new(dim, hidden_units, &mut layout);
        let out = Dense::new(hidden_units, 1, &mut layout);
        MlpNet { hidden, out, l2, n_params: layout.total() }
    }
}

impl Network for MlpNet {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn input_len(&self) -> usize {
        self.hidden.inputs
    }

    fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        self.hidden.init(&mut p, RELU_GAIN, rng);
        self.out.init(&mut p, LINEAR_GAIN, rng);
        p
    }

    fn score(&self, p: &[f64], x: &[f64]) -> f64 {
        let mut h = self.hidden.forward(p, x);
        relu_inplace(&mut h);
        self.out.forward(p, &h)[0]
    }

    fn loss_grad(&self, p: &[f64], x: &[f64], positive: bool, _drop: Option<&mut Rng>, grad: &mut [f64]) -> f64 {
        let mut h = self.hidden.forward(p, x);
        relu_inplace(&mut h);
        let z = self.out.forward(p, &h)[0];
        let (loss, dz) = logistic_loss(z, positive);
        let mut dh = self.out.backward(p, &h, &[dz], grad);
        relu_backward(&h, &mut dh);
        self.hidden.backward(p, x, &dh, grad);
        loss
    }

    fn penalty(&self, p: &[f64], n: usize, mut grad: Option<&mut [f64]>) -> f64 {
        let scale = 0.5 * self.l2 / n.max(1) as f64;
        let a = self.hidden.l2(p, grad.as_deref_mut(), scale);
        let b = self.out.l2(p, grad, scale);
        scale * (a + b)
    }
}

/// Dropout, then dense(α4, ReLU) → dense(8, ReLU) → dense(2) softmax.
#[derive(Debug, Clone)]
pub struct DenseHead {
    d1: Dense,
    d2: Dense,
    out: Dense,
    dropout: f64,
}

pub struct HeadCache {
    input: Vec<f64>,
    mask: Option<Vec<f64>>,
    a1: Vec<f64>,
    a2: Vec<f64>,
}

pub const HEAD_SECOND_UNITS: usize = 8;

impl DenseHead {
    pub fn new(inputs: usize, dense_units: usize, dropout: f64, layout: &mut ParamLayout) -> Self {
        let d1 = Dense::new(inputs, dense_units, layout);
        let d2 = Dense::new(dense_units, HEAD_SECOND_UNITS, layout);
        let out = Dense::new(HEAD_SECOND_UNITS, 2, layout);
        DenseHead { d1, d2, out, dropout }
    }

    pub fn init(&self, p: &mut [f64], rng: &mut Rng) {
        self.d1.init(p, RELU_GAIN, rng);
        self.d2.init(p, RELU_GAIN, rng);
        self.out.init(p, LINEAR_GAIN, rng);
    }

    /// Returns `z_pos - z_neg` and the activations needed for backward.
    pub fn forward(&self, p: &[f64], mut input: Vec<f64>, drop: Option<&mut Rng>) -> (f64, HeadCache) {
        let mask = dropout(&mut input, self.dropout, drop);
        let mut a1 = self.d1.forward(p, &input);
        relu_inplace(&mut a1);
        let mut a2 = self.d2.forward(p, &a1);
        relu_inplace(&mut a2);
        let z = self.out.forward(p, &a2);
        (z[1] - z[0], HeadCache { input, mask, a1, a2 })
    }

    /// `dd` is dL/d(z_pos - z_neg); returns dL/d(input before dropout).
    pub fn backward(&self, p: &[f64], cache: &HeadCache, dd: f64, grad: &mut [f64]) -> Vec<f64> {
        let mut da2 = self.out.backward(p, &cache.a2, &[-dd, dd], grad);
        relu_backward(&cache.a2, &mut da2);
        let mut da1 = self.d2.backward(p, &cache.a1, &da2, grad);
        relu_backward(&cache.a1, &mut da1);
        let mut dx = self.d1.backward(p, &cache.input, &da1, grad);
        if let Some(mask) = &cache.mask {
            for (d, m) in dx.iter_mut().zip(mask) {
                *d *= m;
            }
        }
        dx
    }
}

/// conv(α1 filters, α2×α2, valid) → ReLU → 2×2 max-pool → [`DenseHead`].
#[derive(Debug, Clone)]
pub struct CnnNet {
    height: usize,
    width: usize,
    conv: Conv2d,
    pool: MaxPool,
    head: DenseHead,
    n_params: usize,
}

impl CnnNet {
    pub fn new(height: usize, width: usize, filters: usize, kernel: usize, dropout: f64, dense_units: usize) -> Option<Self> {
        let mut layout = ParamLayout::default();
        let conv = Conv2d::new(1, filters, kernel, 1, 0, &mut layout);
        let (ch, cw) = conv.output_size(height, width).filter(|&(h, w)| h > 0 && w > 0)?;
        let pool = MaxPool { kernel: 2, stride: 2, pad: 0 };
        let (ph, pw) = pool.output_size(ch, cw)?;
        let head = DenseHead::new(filters * ph * pw, dense_units, dropout, &mut layout);
        Some(CnnNet { height, width, conv, pool, head, n_params: layout.total() })
    }

    fn image(&self, x: &[f64]) -> Tensor3 {
        Tensor3 { channels: 1, height: self.height, width: self.width, data: x.to_vec() }
    }
}

impl Network for CnnNet {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn input_len(&self) -> usize {
        self.height * self.width
    }

    fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        self.conv.init(&mut p, RELU_GAIN, rng);
        self.head.init(&mut p, rng);
        p
    }

    fn score(&self, p: &[f64], x: &[f64]) -> f64 {
        let mut c = self.conv.forward(p, &self.image(x));
        relu_inplace(&mut c.data);
        let (pooled, _) = self.pool.forward(&c);
        self.head.forward(p, pooled.data, None).0
    }

    fn loss_grad(&self, p: &[f64], x: &[f64], positive: bool, drop: Option<&mut Rng>, grad: &mut [f64]) -> f64 {
        let img = self.image(x);
        let mut c = self.conv.forward(p, &img);
        relu_inplace(&mut c.data);
        let (pooled, arg) = self.pool.forward(&c);
        let pooled_shape = pooled.shape();
        let (d, cache) = self.head.forward(p, pooled.data, drop);
        let (loss, dd) = logistic_loss(d, positive);
        let dflat = self.head.backward(p, &cache, dd, grad);
        let dpooled = Tensor3 { channels: pooled_shape[0], height: pooled_shape[1], width: pooled_shape[2], data: dflat };
        let mut dc = MaxPool::backward(c.shape(), &arg, &dpooled);
        relu_backward(&c.data, &mut dc.data);
        self.conv.backward(p, &img, &dc, grad);
        loss
    }
}

/// Single LSTM layer over the segment sequence; the final hidden state feeds
/// a [`DenseHead`].
#[derive(Debug, Clone)]
pub struct LstmNet {
    steps: usize,
    dim: usize,
    units: usize,
    gates: Dense,
    head: DenseHead,
    n_params: usize,
}

struct StepCache {
    cat: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmNet {
    pub fn new(steps: usize, dim: usize, units: usize, dropout: f64, dense_units: usize) -> Self {
        let mut layout = ParamLayout::default();
        let gates = Dense::new(dim + units, 4 * units, &mut layout);
        let head = DenseHead::new(units, dense_units, dropout, &mut layout);
        LstmNet { steps, dim, units, gates, head, n_params: layout.total() }
    }

    fn run(&self, p: &[f64], x: &[f64], mut caches: Option<&mut Vec<StepCache>>) -> Vec<f64> {
        let u = self.units;
        let mut h = vec![0.0; u];
        let mut c = vec![0.0; u];
        for t in 0..self.steps {
            let mut cat = x[t * self.dim..(t + 1) * self.dim].to_vec();
            cat.extend_from_slice(&h);
            let z = self.gates.forward(p, &cat);
            let i: Vec<f64> = z[..u].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[u..2 * u].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[2 * u..3 * u].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = z[3 * u..].iter().map(|&v| sigmoid(v)).collect();
            let c_new: Vec<f64> = (0..u).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            h = (0..u).map(|k| o[k] * tanh_c[k]).collect();
            let c_prev = std::mem::replace(&mut c, c_new);
            if let Some(cs) = caches.as_deref_mut() {
                cs.push(StepCache { cat, i, f, g, o, c_prev, tanh_c });
            }
        }
        h
    }
}

impl Network for LstmNet {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn input_len(&self) -> usize {
        self.steps * self.dim
    }

    fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        self.gates.init(&mut p, LINEAR_GAIN, rng);
        // forget-gate bias starts at 1; the gate layer is allocated first so
        // its bias directly follows its weights
        let bias = self.gates.inputs * self.gates.outputs;
        for b in &mut p[bias + self.units..bias + 2 * self.units] {
            *b = 1.0;
        }
        self.head.init(&mut p, rng);
        p
    }

    fn score(&self, p: &[f64], x: &[f64]) -> f64 {
        let h = self.run(p, x, None);
        self.head.forward(p, h, None).0
    }

    fn loss_grad(&self, p: &[f64], x: &[f64], positive: bool, drop: Option<&mut Rng>, grad: &mut [f64]) -> f64 {
        let u = self.units;
        let mut caches = Vec::with_capacity(self.steps);
        let h = self.run(p, x, Some(&mut caches));
        let (d, head_cache) = self.head.forward(p, h, drop);
        let (loss, dd) = logistic_loss(d, positive);
        let mut dh = self.head.backward(p, &head_cache, dd, grad);
        let mut dc = vec![0.0; u];
        let mut dz = vec![0.0; 4 * u];
        for s in caches.iter().rev() {
            for k in 0..u {
                let dout = dh[k] * s.tanh_c[k];
                dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                dz[k] = dc[k] * s.g[k] * s.i[k] * (1.0 - s.i[k]);
                dz[u + k] = dc[k] * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
                dz[2 * u + k] = dc[k] * s.i[k] * (1.0 - s.g[k] * s.g[k]);
                dz[3 * u + k] = dout * s.o[k] * (1.0 - s.o[k]);
                dc[k] *= s.f[k];
            }
            let dcat = self.gates.backward(p, &s.cat, &dz, grad);
            dh.copy_from_slice(&dcat[self.dim..]);
        }
        loss
    }
}


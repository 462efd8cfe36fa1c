//! Residual networks without batch normalisation.
//!
//! Two presets: `tiny` (3×3 stem with 8 channels, 2×2 max-pool, two basic
//! blocks, flatten, dense 2) for desk-scale training, and `resnet50_audio`,
//! the 50-layer bottleneck layout ([3, 4, 6, 3] blocks) with a single input
//! channel and a two-way output.

use serde::{Deserialize, Serialize};

use super::layers::{logistic_loss, relu_backward, relu_inplace, Conv2d, Dense, MaxPool, ParamLayout, LINEAR_GAIN, RELU_GAIN};
use super::nets::Network;
use crate::numerics::{Rng, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResNetPreset {
    Tiny,
    Resnet50Audio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Head {
    Flatten,
    GlobalAvg,
}

#[derive(Debug, Clone)]
struct Block {
    /// ReLU between consecutive convolutions, none after the last.
    convs: Vec<Conv2d>,
    shortcut: Option<Conv2d>,
}

struct BlockCache {
    /// Input to each convolution; `inputs[0]` is the block input.
    inputs: Vec<Tensor3>,
    out: Tensor3,
}

/// One entry per stage of the forward pass: name and `[channels, height, width]`.
pub type ShapeTrace = Vec<(String, [usize; 3])>;

#[derive(Debug, Clone)]
pub struct ResNet {
    preset: ResNetPreset,
    height: usize,
    width: usize,
    stem: Conv2d,
    pool: MaxPool,
    blocks: Vec<Block>,
    head: Head,
    fc: Dense,
    /// Scale applied to the last convolution of each residual branch at init.
    residual_scale: f64,
    trace: ShapeTrace,
    n_params: usize,
}

const RESNET50_STAGES: [(usize, usize, usize); 4] = [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)];
const BOTTLENECK_EXPANSION: usize = 4;
const TINY_CHANNELS: usize = 8;
const TINY_BLOCKS: usize = 2;

impl ResNet {
    /// `None` when the input is too small for the preset's down-sampling.
    pub fn new(preset: ResNetPreset, height: usize, width: usize) -> Option<Self> {
        let mut layout = ParamLayout::default();
        let mut trace = ShapeTrace::new();
        let conv_out = |c: &Conv2d, (h, w): (usize, usize)| c.output_size(h, w).filter(|&(a, b)| a > 0 && b > 0);

        let (stem, pool, residual_scale) = match preset {
            ResNetPreset::Tiny => (
                Conv2d::new(1, TINY_CHANNELS, 3, 1, 1, &mut layout),
                MaxPool { kernel: 2, stride: 2, pad: 0 },
                1.0,
            ),
            ResNetPreset::Resnet50Audio => {
                (Conv2d::new(1, 64, 7, 2, 3, &mut layout), MaxPool { kernel: 3, stride: 2, pad: 1 }, 0.1)
            }
        };
        let stem_name = if preset == ResNetPreset::Tiny { "stem" } else { "conv1" };
        let mut hw = conv_out(&stem, (height, width))?;
        trace.push((stem_name.into(), [stem.out_channels, hw.0, hw.1]));
        hw = pool.output_size(hw.0, hw.1)?;
        let mut channels = stem.out_channels;
        trace.push(("pool".into(), [channels, hw.0, hw.1]));

        let mut blocks = Vec::new();
        match preset {
            ResNetPreset::Tiny => {
                for b in 0..TINY_BLOCKS {
                    let convs = vec![
                        Conv2d::new(channels, channels, 3, 1, 1, &mut layout),
                        Conv2d::new(channels, channels, 3, 1, 1, &mut layout),
                    ];
                    blocks.push(Block { convs, shortcut: None });
                    trace.push((format!("block{}", b + 1), [channels, hw.0, hw.1]));
                }
            }
            ResNetPreset::Resnet50Audio => {
                for (stage, &(mid, count, stride)) in RESNET50_STAGES.iter().enumerate() {
                    let out_c = mid * BOTTLENECK_EXPANSION;
                    for b in 0..count {
                        let s = if b == 0 { stride } else { 1 };
                        let convs = vec![
                            Conv2d::new(channels, mid, 1, 1, 0, &mut layout),
                            Conv2d::new(mid, mid, 3, s, 1, &mut layout),
                            Conv2d::new(mid, out_c, 1, 1, 0, &mut layout),
                        ];
                        hw = conv_out(&convs[1], hw)?;
                        let shortcut = (s != 1 || channels != out_c).then(|| Conv2d::new(channels, out_c, 1, s, 0, &mut layout));
                        blocks.push(Block { convs, shortcut });
                        channels = out_c;
                    }
                    trace.push((format!("conv{}_x", stage + 2), [channels, hw.0, hw.1]));
                }
            }
        }

        let (head, features) = match preset {
            ResNetPreset::Tiny => (Head::Flatten, channels * hw.0 * hw.1),
            ResNetPreset::Resnet50Audio => (Head::GlobalAvg, channels),
        };
        trace.push((if head == Head::Flatten { "flatten" } else { "gap" }.into(), [features, 1, 1]));
        let fc = Dense::new(features, 2, &mut layout);
        trace.push(("fc".into(), [2, 1, 1]));
        Some(ResNet { preset, height, width, stem, pool, blocks, head, fc, residual_scale, trace, n_params: layout.total() })
    }

    pub fn preset(&self) -> ResNetPreset {
        self.preset
    }

    /// Declared per-stage output shapes for this input size.
    pub fn shape_trace(&self) -> &ShapeTrace {
        &self.trace
    }

    fn image(&self, x: &[f64]) -> Tensor3 {
        Tensor3 { channels: 1, height: self.height, width: self.width, data: x.to_vec() }
    }

    fn block_forward(block: &Block, p: &[f64], x: Tensor3) -> (Tensor3, BlockCache) {
        let mut inputs = vec![x];
        let mut h = block.convs[0].forward(p, &inputs[0]);
        for conv in &block.convs[1..] {
            relu_inplace(&mut h.data);
            let next = conv.forward(p, &h);
            inputs.push(std::mem::replace(&mut h, next));
        }
        match &block.shortcut {
            Some(proj) => {
                let s = proj.forward(p, &inputs[0]);
                h.data.iter_mut().zip(&s.data).for_each(|(a, b)| *a += b);
            }
            None => h.data.iter_mut().zip(&inputs[0].data).for_each(|(a, b)| *a += b),
        }
        relu_inplace(&mut h.data);
        let cache = BlockCache { inputs, out: h.clone() };
        (h, cache)
    }

    fn block_backward(block: &Block, p: &[f64], cache: &BlockCache, mut dout: Tensor3, grad: &mut [f64]) -> Tensor3 {
        relu_backward(&cache.out.data, &mut dout.data);
        let mut g = dout.clone();
        for i in (0..block.convs.len()).rev() {
            let mut gi = block.convs[i].backward(p, &cache.inputs[i], &g, grad);
            if i > 0 {
                relu_backward(&cache.inputs[i].data, &mut gi.data);
            }
            g = gi;
        }
        let skip = match &block.shortcut {
            Some(proj) => proj.backward(p, &cache.inputs[0], &dout, grad),
            None => dout,
        };
        g.data.iter_mut().zip(&skip.data).for_each(|(a, b)| *a += b);
        g
    }

    fn features(&self, t: &Tensor3) -> Vec<f64> {
        match self.head {
            Head::Flatten => t.data.clone(),
            Head::GlobalAvg => {
                let n = (t.height * t.width) as f64;
                (0..t.channels).map(|c| t.channel(c).iter().sum::<f64>() / n).collect()
            }
        }
    }

    /// Positive and negative logits for one image, `[z_neg, z_pos]`.
    pub fn logits(&self, p: &[f64], x: &[f64]) -> [f64; 2] {
        let mut t = self.stem.forward(p, &self.image(x));
        relu_inplace(&mut t.data);
        let (mut t, _) = self.pool.forward(&t);
        for b in &self.blocks {
            t = Self::block_forward(b, p, t).0;
        }
        let z = self.fc.forward(p, &self.features(&t));
        [z[0], z[1]]
    }
}

impl Network for ResNet {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn input_len(&self) -> usize {
        self.height * self.width
    }

    fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        self.stem.init(&mut p, RELU_GAIN, rng);
        for b in &self.blocks {
            for c in &b.convs {
                c.init(&mut p, RELU_GAIN, rng);
            }
            b.convs.last().unwrap().scale_weights(&mut p, self.residual_scale);
            if let Some(s) = &b.shortcut {
                s.init(&mut p, LINEAR_GAIN, rng);
            }
        }
        self.fc.init(&mut p, LINEAR_GAIN, rng);
        p
    }

    fn score(&self, p: &[f64], x: &[f64]) -> f64 {
        let z = self.logits(p, x);
        z[1] - z[0]
    }

    fn loss_grad(&self, p: &[f64], x: &[f64], positive: bool, _drop: Option<&mut Rng>, grad: &mut [f64]) -> f64 {
        let img = self.image(x);
        let mut stem_out = self.stem.forward(p, &img);
        relu_inplace(&mut stem_out.data);
        let (mut t, arg) = self.pool.forward(&stem_out);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (next, cache) = Self::block_forward(b, p, t);
            caches.push(cache);
            t = next;
        }
        let feat = self.features(&t);
        let z = self.fc.forward(p, &feat);
        let (loss, dd) = logistic_loss(z[1] - z[0], positive);
        let dfeat = self.fc.backward(p, &feat, &[-dd, dd], grad);
        let mut dt = Tensor3::zeros(t.channels, t.height, t.width);
        match self.head {
            Head::Flatten => dt.data = dfeat,
            Head::GlobalAvg => {
                let n = t.height * t.width;
                for c in 0..t.channels {
                    dt.data[c * n..(c + 1) * n].fill(dfeat[c] / n as f64);
                }
            }
        }
        for (b, cache) in self.blocks.iter().zip(&caches).rev() {
            dt = Self::block_backward(b, p, cache, dt, grad);
        }
        let mut ds = MaxPool::backward(stem_out.shape(), &arg, &dt);
        relu_backward(&stem_out.data, &mut ds.data);
        self.stem.backward(p, &img, &ds, grad);
        loss
    }
}

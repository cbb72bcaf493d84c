//! Three-block densely connected network for 32x32 RGB inputs.
//!
//! stem 3x3 conv → [dense block → transition] x2 → dense block → BN → ELU →
//! global average pool → linear head. Dense layers are BN → ELU → 3x3 conv →
//! dropout, each appending `growth_rate` channels; transitions are
//! BN → ELU → 1x1 conv (channel count preserved) → 2x2 average pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    avg_pool2_backward, avg_pool2_forward, elu_backward, elu_forward, BatchNorm2d, Conv2d, Dropout, Linear, Mode,
    Module,
};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const BLOCKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub depth: usize,
    pub growth_rate: usize,
    /// Output channels of the stem convolution.
    pub stem_channels: usize,
    pub dropout: f64,
    pub elu_alpha: f64,
    pub num_classes: usize,
    pub input_size: usize,
    pub input_channels: usize,
}

impl NetworkConfig {
    /// Depth 16/28/40 style configuration with growth rate 12.
    pub fn densenet(depth: usize, num_classes: usize) -> Result<Self> {
        let c = NetworkConfig {
            depth,
            growth_rate: 12,
            stem_channels: 16,
            dropout: 0.2,
            elu_alpha: 1.0,
            num_classes,
            input_size: 32,
            input_channels: 3,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 7 || (self.depth - 4) % BLOCKS != 0 {
            return Err(Error::Config(format!(
                "depth {} must be 3·L + 4 with L >= 1 layers per block",
                self.depth
            )));
        }
        if self.growth_rate == 0 || self.stem_channels == 0 || self.num_classes == 0 || self.input_channels == 0 {
            return Err(Error::Config("growth rate, stem channels, classes and input channels must be positive".into()));
        }
        if self.input_size < 4 || self.input_size % 4 != 0 {
            return Err(Error::Config(format!("input size {} must be a positive multiple of 4", self.input_size)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }

    /// `(depth − 4) / 3`: the stem, two transitions and the head account for
    /// the other four weighted layers.
    pub fn layers_per_block(&self) -> usize {
        (self.depth - 4) / BLOCKS
    }

    /// Channels at the output of dense block `b` (0-based).
    pub fn channels_after_block(&self, b: usize) -> usize {
        self.stem_channels + (b + 1) * self.layers_per_block() * self.growth_rate
    }

    pub fn channels_before_block(&self, b: usize) -> usize {
        self.stem_channels + b * self.layers_per_block() * self.growth_rate
    }

    pub fn spatial(&self, b: usize) -> usize {
        self.input_size >> b
    }

    pub fn feature_channels(&self) -> usize {
        self.channels_after_block(BLOCKS - 1)
    }
}

#[derive(Debug, Clone)]
struct DenseLayer<T> {
    bn: BatchNorm2d<T>,
    conv: Conv2d<T>,
    dropout: Dropout<T>,
    act: Vec<T>,
    dact: Vec<T>,
}

#[derive(Debug, Clone)]
struct Transition<T> {
    bn: BatchNorm2d<T>,
    conv: Conv2d<T>,
    act: Vec<T>,
    conv_out: Vec<T>,
    dact: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct DenseNet<T> {
    config: NetworkConfig,
    stem: Conv2d<T>,
    blocks: Vec<Vec<DenseLayer<T>>>,
    transitions: Vec<Transition<T>>,
    head_bn: BatchNorm2d<T>,
    head: Linear<T>,
    rng: ChaCha8Rng,
    // forward caches
    batch: usize,
    input: Vec<T>,
    feats: Vec<Vec<T>>,
    head_act: Vec<T>,
    pooled: Vec<T>,
    trained_forward: bool,
}

impl<T: Scalar> DenseNet<T> {
    /// He-initialized convolutions, unit-gamma batch norms and a zero head.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.growth_rate;
        let stem = Conv2d::new(config.input_channels, config.stem_channels, 3, &mut rng);
        let mut blocks = Vec::with_capacity(BLOCKS);
        let mut transitions = Vec::with_capacity(BLOCKS - 1);
        for b in 0..BLOCKS {
            let c0 = config.channels_before_block(b);
            let layers = (0..config.layers_per_block())
                .map(|l| {
                    let c_in = c0 + l * k;
                    DenseLayer {
                        bn: BatchNorm2d::new(c_in),
                        conv: Conv2d::new(c_in, k, 3, &mut rng),
                        dropout: Dropout::new(config.dropout),
                        act: Vec::new(),
                        dact: Vec::new(),
                    }
                })
                .collect();
            blocks.push(layers);
            if b + 1 < BLOCKS {
                let c = config.channels_after_block(b);
                transitions.push(Transition {
                    bn: BatchNorm2d::new(c),
                    conv: Conv2d::new(c, c, 1, &mut rng),
                    act: Vec::new(),
                    conv_out: Vec::new(),
                    dact: Vec::new(),
                });
            }
        }
        let features = config.feature_channels();
        Ok(DenseNet {
            head_bn: BatchNorm2d::new(features),
            head: Linear::zeros(features, config.num_classes),
            stem,
            blocks,
            transitions,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d20f),
            batch: 0,
            input: Vec::new(),
            feats: Vec::new(),
            head_act: Vec::new(),
            pooled: Vec::new(),
            trained_forward: false,
            config,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Reseeds the dropout stream.
    pub fn set_dropout_seed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Replaces the classification head with a zeroed one of `num_classes`
    /// outputs; all other weights are kept.
    pub fn reset_head(&mut self, num_classes: usize) -> Result<()> {
        if num_classes == 0 {
            return Err(Error::Config("head needs at least one class".into()));
        }
        self.config.num_classes = num_classes;
        self.head = Linear::zeros(self.config.feature_channels(), num_classes);
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.config.input_channels * self.config.input_size * self.config.input_size
    }

    /// Logits `[n, classes]` for contiguous `[n, 3, S, S]` input.
    pub fn forward(&mut self, x: &[T], n: usize, mode: Mode) -> Result<Vec<T>> {
        let expect = n * self.input_len();
        if x.len() != expect || n == 0 {
            return Err(Error::Shape(format!("expected {expect} input values for batch {n}, got {}", x.len())));
        }
        let cfg = &self.config;
        let k = cfg.growth_rate;
        self.batch = n;
        self.trained_forward = mode == Mode::Train;
        if mode == Mode::Train {
            self.input.clear();
            self.input.extend_from_slice(x);
        }
        self.feats.resize(BLOCKS, Vec::new());
        for b in 0..BLOCKS {
            let s = cfg.spatial(b);
            // every channel is overwritten below
            self.feats[b].resize(n * cfg.channels_after_block(b) * s * s, T::zero());
        }

        let s0 = cfg.spatial(0);
        let stride0 = cfg.channels_after_block(0) * s0 * s0;
        self.stem.forward(x, n, s0, s0, &mut self.feats[0], stride0, 0);

        for b in 0..BLOCKS {
            let s = cfg.spatial(b);
            let hw = s * s;
            let total = cfg.channels_after_block(b);
            let stride = total * hw;
            let c0 = cfg.channels_before_block(b);
            for (l, layer) in self.blocks[b].iter_mut().enumerate() {
                let c_in = c0 + l * k;
                layer.act.resize(n * c_in * hw, T::zero());
                layer.bn.forward(&self.feats[b], n, hw, stride, mode, &mut layer.act);
                elu_forward(&mut layer.act, T::of(cfg.elu_alpha));
                layer.conv.forward(&layer.act, n, s, s, &mut self.feats[b], stride, c_in * hw);
                layer
                    .dropout
                    .forward(&mut self.feats[b], n, stride, c_in * hw, k * hw, mode, &mut self.rng);
            }
            if b + 1 < BLOCKS {
                let t = &mut self.transitions[b];
                t.act.resize(n * total * hw, T::zero());
                t.bn.forward(&self.feats[b], n, hw, stride, mode, &mut t.act);
                elu_forward(&mut t.act, T::of(cfg.elu_alpha));
                t.conv_out.resize(n * total * hw, T::zero());
                t.conv.forward(&t.act, n, s, s, &mut t.conv_out, stride, 0);
                let (cur, next) = self.feats.split_at_mut(b + 1);
                let _ = cur;
                let s2 = cfg.spatial(b + 1);
                let next_stride = cfg.channels_after_block(b + 1) * s2 * s2;
                avg_pool2_forward(&t.conv_out, n, total, s, s, &mut next[0], next_stride);
            }
        }

        let s = cfg.spatial(BLOCKS - 1);
        let hw = s * s;
        let c = cfg.feature_channels();
        self.head_act.resize(n * c * hw, T::zero());
        self.head_bn.forward(&self.feats[BLOCKS - 1], n, hw, c * hw, mode, &mut self.head_act);
        elu_forward(&mut self.head_act, T::of(cfg.elu_alpha));
        let inv = T::of(1.0 / hw as f64);
        self.pooled = self
            .head_act
            .chunks_exact(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(self.head.forward(&self.pooled, n))
    }

    /// Backpropagates `dlogits` through the last train-mode forward pass,
    /// accumulating into every parameter's gradient.
    pub fn backward(&mut self, dlogits: &[T]) -> Result<()> {
        if !self.trained_forward {
            return Err(Error::Shape("backward requires a preceding train-mode forward pass".into()));
        }
        let n = self.batch;
        if dlogits.len() != n * self.config.num_classes {
            return Err(Error::Shape("dlogits do not match the last batch".into()));
        }
        let cfg = self.config.clone();
        let k = cfg.growth_rate;
        let alpha = T::of(cfg.elu_alpha);

        let mut grads: Vec<Vec<T>> = self.feats.iter().map(|f| vec![T::zero(); f.len()]).collect();

        // head
        let s = cfg.spatial(BLOCKS - 1);
        let hw = s * s;
        let c = cfg.feature_channels();
        let dpooled = self.head.backward(&self.pooled, dlogits, n);
        let inv = T::of(1.0 / hw as f64);
        let mut dact: Vec<T> = dpooled.iter().flat_map(|&g| std::iter::repeat(g * inv).take(hw)).collect();
        elu_backward(&self.head_act, &mut dact, alpha);
        self.head_bn.backward(&dact, n, hw, &mut grads[BLOCKS - 1], c * hw);

        for b in (0..BLOCKS).rev() {
            let s = cfg.spatial(b);
            let hw = s * s;
            let total = cfg.channels_after_block(b);
            let stride = total * hw;
            if b + 1 < BLOCKS {
                let t = &mut self.transitions[b];
                let s2 = cfg.spatial(b + 1);
                let next_stride = cfg.channels_after_block(b + 1) * s2 * s2;
                let mut dconv = vec![T::zero(); n * total * hw];
                avg_pool2_backward(&grads[b + 1], next_stride, n, total, s, s, &mut dconv);
                t.dact.resize(n * total * hw, T::zero());
                t.conv.backward(&t.act, n, s, s, &dconv, stride, 0, Some(&mut t.dact));
                elu_backward(&t.act, &mut t.dact, alpha);
                t.bn.backward(&t.dact, n, hw, &mut grads[b], stride);
            }
            let c0 = cfg.channels_before_block(b);
            for (l, layer) in self.blocks[b].iter_mut().enumerate().rev() {
                let c_in = c0 + l * k;
                layer.dropout.backward(&mut grads[b], n, stride, c_in * hw, k * hw);
                layer.dact.resize(n * c_in * hw, T::zero());
                layer
                    .conv
                    .backward(&layer.act, n, s, s, &grads[b], stride, c_in * hw, Some(&mut layer.dact));
                elu_backward(&layer.act, &mut layer.dact, alpha);
                layer.bn.backward(&layer.dact, n, hw, &mut grads[b], stride);
            }
        }

        let s0 = cfg.spatial(0);
        let stride0 = cfg.channels_after_block(0) * s0 * s0;
        self.stem.backward(&self.input, n, s0, s0, &grads[0], stride0, 0, None);
        Ok(())
    }

    /// Output of dense block `b` from the last forward pass, `[n, C_b, S_b, S_b]`.
    pub fn block_output(&self, b: usize) -> Option<&[T]> {
        self.feats.get(b).map(|v| v.as_slice())
    }

    /// Every tensor (parameters and batch-norm running statistics) in a fixed
    /// order with a unique name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.stem.tensors("stem", &mut out);
        for (b, block) in self.blocks.iter().enumerate() {
            for (l, layer) in block.iter().enumerate() {
                layer.bn.tensors(&format!("block{b}.layer{l}.bn"), &mut out);
                layer.conv.tensors(&format!("block{b}.layer{l}.conv"), &mut out);
            }
            if let Some(t) = self.transitions.get(b) {
                t.bn.tensors(&format!("transition{b}.bn"), &mut out);
                t.conv.tensors(&format!("transition{b}.conv"), &mut out);
            }
        }
        self.head_bn.tensors("head.bn", &mut out);
        self.head.tensors("head.fc", &mut out);
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.stem.tensors_mut("stem", &mut out);
        let mut transitions = self.transitions.iter_mut();
        for (b, block) in self.blocks.iter_mut().enumerate() {
            for (l, layer) in block.iter_mut().enumerate() {
                layer.bn.tensors_mut(&format!("block{b}.layer{l}.bn"), &mut out);
                layer.conv.tensors_mut(&format!("block{b}.layer{l}.conv"), &mut out);
            }
            if b + 1 < BLOCKS {
                let t = transitions.next().expect("one transition between blocks");
                t.bn.tensors_mut(&format!("transition{b}.bn"), &mut out);
                t.conv.tensors_mut(&format!("transition{b}.conv"), &mut out);
            }
        }
        self.head_bn.tensors_mut("head.bn", &mut out);
        self.head.tensors_mut("head.fc", &mut out);
        out
    }

    /// Trainable tensors only, in [`named_tensors`](Self::named_tensors) order.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.named_tensors_mut()
            .into_iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t)
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors()
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn is_head_tensor(name: &str) -> bool {
        name.starts_with("head.fc.")
    }

    /// Copies tensor values by name; every tensor of `self` must be present
    /// with the same shape.
    pub fn load_tensors(&mut self, source: &[(String, Tensor<T>)]) -> Result<()> {
        for (name, t) in self.named_tensors_mut() {
            let src = source
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if src.1.shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?} != {:?}",
                    src.1.shape, t.shape
                )));
            }
            t.data.copy_from_slice(&src.1.data);
        }
        Ok(())
    }

    /// Owned snapshot of every tensor (values only).
    pub fn snapshot(&self) -> Vec<(String, Tensor<T>)> {
        self.named_tensors()
            .into_iter()
            .map(|(n, t)| {
                (
                    n,
                    Tensor {
                        shape: t.shape.clone(),
                        data: t.data.clone(),
                        grad: None,
                    },
                )
            })
            .collect()
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> DenseNet<U> {
        let mut other = DenseNet::<U>::new(self.config.clone(), 0).expect("validated config");
        let snap: Vec<(String, Tensor<U>)> = self.snapshot().into_iter().map(|(n, t)| (n, t.cast())).collect();
        other.load_tensors(&snap).expect("same architecture");
        other.rng = self.rng.clone();
        other
    }
}

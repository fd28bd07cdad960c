//! The residual denoiser: `Conv3×3+ELU`, a stack of
//! `Conv3×3 → ELU → Conv1×1 → BN` blocks, and a final `Conv3×3`.
//!
//! The network predicts the noise `R` of its input; the clean estimate is
//! `y − R`. There is no pooling and every convolution is "same"-padded, so the
//! output has the input's spatial size.

use crate::conv::{conv2d_backward, conv2d_forward, Filter};
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, msra_init, Activation, BatchNormState, Mode,
};
use crate::tensor::{Real, Tensor};

/// Activation used inside the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Elu,
    Relu,
}

/// Network topology.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Number of `Conv-ELU-Conv1×1-BN` blocks.
    pub blocks: usize,
    /// Feature width of every hidden layer.
    pub channels: usize,
    /// 1 for gray, 3 for color.
    pub in_channels: usize,
    /// ELU saturation level.
    pub alpha: f64,
    pub activation: ActivationKind,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { blocks: 15, channels: 64, in_channels: 1, alpha: 1.0, activation: ActivationKind::Elu, seed: 0 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks < 1 {
            return Err(Error::InvalidArgument("network needs at least one block".into()));
        }
        if self.channels < 1 {
            return Err(Error::InvalidArgument("channels must be at least 1".into()));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::InvalidArgument(format!("in_channels must be 1 or 3, got {}", self.in_channels)));
        }
        self.activation()?;
        Ok(())
    }

    pub fn activation(&self) -> Result<Activation> {
        match self.activation {
            ActivationKind::Elu => Activation::elu(self.alpha),
            ActivationKind::Relu => Ok(Activation::Relu),
        }
    }
}

/// What a parameter buffer holds; weight decay applies to `ConvWeight` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    BnGamma,
    BnBeta,
    BnRunningMean,
    BnRunningVar,
}

impl ParamKind {
    pub fn is_learnable(self) -> bool {
        !matches!(self, ParamKind::BnRunningMean | ParamKind::BnRunningVar)
    }
}

/// Read-only view of one named parameter buffer.
#[derive(Debug)]
pub struct ParamView<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub dims: Vec<usize>,
    pub values: &'a [T],
}

/// Mutable view of one named parameter buffer.
#[derive(Debug)]
pub struct ParamMut<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub dims: Vec<usize>,
    pub values: &'a mut [T],
}

/// `Conv3×3 → activation → Conv1×1 → BN`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub conv3: Filter<T>,
    pub conv1: Filter<T>,
    pub bn: BatchNormState<T>,
}

/// Intermediates a block needs for its backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    input: Tensor<T>,
    pre_act: Tensor<T>,
    act: Tensor<T>,
    bn_input: Tensor<T>,
}

/// Parameter gradients of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads<T> {
    pub conv3: Filter<T>,
    pub conv1: Filter<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> Block<T> {
    pub fn new(conv3: Filter<T>, conv1: Filter<T>, bn: BatchNormState<T>) -> Result<Self> {
        let c = conv3.c_out();
        if conv3.kernel() != 3 || conv1.kernel() != 1 {
            return Err(Error::InvalidArgument("block needs a 3x3 then a 1x1 convolution".into()));
        }
        if conv1.c_in() != c || conv1.c_out() != c || bn.channels() != c {
            return Err(Error::Shape("block layers disagree on channel count".into()));
        }
        Ok(Block { conv3, conv1, bn })
    }

    /// Train-mode forward; updates BN running statistics.
    pub fn forward_train(&mut self, x: &Tensor<T>, act: &Activation) -> Result<(Tensor<T>, BlockCache<T>)> {
        self.bn.mode = Mode::Train;
        let pre_act = conv2d_forward(x, &self.conv3, 1)?;
        let a = act.forward(&pre_act);
        a.check_finite("activation")?;
        let bn_input = conv2d_forward(&a, &self.conv1, 0)?;
        let out = batchnorm_forward(&bn_input, &mut self.bn)?;
        Ok((out, BlockCache { input: x.clone(), pre_act, act: a, bn_input }))
    }

    pub fn forward_eval(&self, x: &Tensor<T>, act: &Activation) -> Result<Tensor<T>> {
        let pre_act = conv2d_forward(x, &self.conv3, 1)?;
        let a = act.forward(&pre_act);
        a.check_finite("activation")?;
        let bn_input = conv2d_forward(&a, &self.conv1, 0)?;
        batchnorm_infer(&bn_input, &self.bn)
    }

    /// Returns the gradient with respect to the block input and the parameter gradients.
    pub fn backward(&self, cache: &BlockCache<T>, grad_out: &Tensor<T>, act: &Activation) -> Result<(Tensor<T>, BlockGrads<T>)> {
        let mut bn = self.bn.clone();
        bn.mode = Mode::Train;
        let (g_bn_in, gamma, beta) = batchnorm_backward(&cache.bn_input, grad_out, &bn)?;
        let (g_act, conv1) = conv2d_backward(&cache.act, &self.conv1, &g_bn_in, 0)?;
        let g_pre = act.backward(&cache.pre_act, &g_act)?;
        let (g_in, conv3) = conv2d_backward(&cache.input, &self.conv3, &g_pre, 1)?;
        Ok((g_in, BlockGrads { conv3, conv1, gamma, beta }))
    }
}

/// Gradients mirroring every learnable parameter of a [`ResidualDenoiser`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub head: Filter<T>,
    pub blocks: Vec<BlockGrads<T>>,
    pub tail: Filter<T>,
}

impl<T: Real> Gradients<T> {
    /// Flat buffers in the same order as [`ResidualDenoiser::params_mut`].
    pub fn buffers(&self) -> Vec<&[T]> {
        let mut out = vec![self.head.weights().as_slice(), self.head.bias()];
        for b in &self.blocks {
            out.extend([
                b.conv3.weights().as_slice(),
                b.conv3.bias(),
                b.conv1.weights().as_slice(),
                b.conv1.bias(),
                &b.gamma[..],
                &b.beta[..],
            ]);
        }
        out.extend([self.tail.weights().as_slice(), self.tail.bias()]);
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        let (hw, hb) = split_filter(&mut self.head);
        out.extend([hw, hb]);
        for b in &mut self.blocks {
            let (w3, b3) = split_filter(&mut b.conv3);
            let (w1, b1) = split_filter(&mut b.conv1);
            out.extend([w3, b3, w1, b1, &mut b.gamma[..], &mut b.beta[..]]);
        }
        let (tw, tb) = split_filter(&mut self.tail);
        out.extend([tw, tb]);
        out
    }
}

fn split_filter<T: Real>(f: &mut Filter<T>) -> (&mut [T], &mut [T]) {
    let (w, b) = f.parts_mut();
    (w.as_mut_slice(), b)
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    input: Tensor<T>,
    head_pre: Tensor<T>,
    blocks: Vec<BlockCache<T>>,
    tail_input: Tensor<T>,
}

/// The full residual denoising network.
#[derive(Debug, Clone)]
pub struct ResidualDenoiser<T> {
    config: NetworkConfig,
    activation: Activation,
    head: Filter<T>,
    blocks: Vec<Block<T>>,
    tail: Filter<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Real> PartialEq for ResidualDenoiser<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.head == other.head && self.blocks == other.blocks && self.tail == other.tail
    }
}

impl<T: Real> ResidualDenoiser<T> {
    /// MSRA-initialized network; each layer draws from its own seeded stream.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let (c, cin, seed) = (config.channels, config.in_channels, config.seed);
        let head = msra_init(c, cin, 3, seed, 0);
        let blocks = (0..config.blocks)
            .map(|i| {
                let s = 1 + 2 * i as u64;
                Block::new(msra_init(c, c, 3, seed, s), msra_init(c, c, 1, seed, s + 1), BatchNormState::new(c))
            })
            .collect::<Result<Vec<_>>>()?;
        let tail = msra_init(cin, c, 3, seed, 1 + 2 * config.blocks as u64);
        Self::from_parts(config, head, blocks, tail)
    }

    /// Network whose convolution weights and biases are all zero.
    pub fn zeroed(config: NetworkConfig) -> Result<Self> {
        let mut net = Self::new(config)?;
        for p in net.params_mut() {
            if matches!(p.kind, ParamKind::ConvWeight | ParamKind::ConvBias) {
                p.values.fill(T::zero());
            }
        }
        Ok(net)
    }

    pub fn from_parts(config: NetworkConfig, head: Filter<T>, blocks: Vec<Block<T>>, tail: Filter<T>) -> Result<Self> {
        config.validate()?;
        let (c, cin) = (config.channels, config.in_channels);
        if head.kernel() != 3 || head.c_in() != cin || head.c_out() != c {
            return Err(Error::Shape("head must be a 3x3 convolution from input to feature channels".into()));
        }
        if tail.kernel() != 3 || tail.c_in() != c || tail.c_out() != cin {
            return Err(Error::Shape("tail must be a 3x3 convolution from feature to input channels".into()));
        }
        if blocks.len() != config.blocks || blocks.iter().any(|b| b.conv3.c_in() != c || b.conv3.c_out() != c) {
            return Err(Error::Shape("block list does not match the configuration".into()));
        }
        let activation = config.activation()?;
        Ok(ResidualDenoiser { config, activation, head, blocks, tail, cache: None })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block<T>] {
        &mut self.blocks
    }

    pub fn head(&self) -> &Filter<T> {
        &self.head
    }

    pub fn tail(&self) -> &Filter<T> {
        &self.tail
    }

    /// Number of convolution layers: head, tail, and two per block.
    pub fn conv_layer_count(&self) -> usize {
        2 + 2 * self.blocks.len()
    }

    fn check_input(&self, y: &Tensor<T>) -> Result<()> {
        let s = y.shape();
        if s.c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "input has {} channels, network expects {}",
                s.c, self.config.in_channels
            )));
        }
        Ok(())
    }

    /// Predicts the noise component of `y`.
    ///
    /// Train mode uses batch statistics, updates BN running statistics and
    /// retains the intermediates needed by [`Self::backward`].
    pub fn forward(&mut self, y: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match mode {
            Mode::Eval => {
                self.cache = None;
                self.forward_eval(y)
            }
            Mode::Train => {
                self.check_input(y)?;
                let head_pre = conv2d_forward(y, &self.head, 1)?;
                let mut x = self.activation.forward(&head_pre);
                x.check_finite("activation")?;
                let mut caches = Vec::with_capacity(self.blocks.len());
                for block in &mut self.blocks {
                    let (out, cache) = block.forward_train(&x, &self.activation)?;
                    caches.push(cache);
                    x = out;
                }
                let r = conv2d_forward(&x, &self.tail, 1)?;
                self.cache = Some(ForwardCache { input: y.clone(), head_pre, blocks: caches, tail_input: x });
                Ok(r)
            }
        }
    }

    /// Eval-mode forward pass; read-only, safe to call from many threads.
    pub fn forward_eval(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(y)?;
        let mut x = self.activation.forward(&conv2d_forward(y, &self.head, 1)?);
        x.check_finite("activation")?;
        for block in &self.blocks {
            x = block.forward_eval(&x, &self.activation)?;
        }
        conv2d_forward(&x, &self.tail, 1)
    }

    /// Clean estimate `clamp(y − R, 0, 1)` using eval-mode statistics.
    pub fn denoise(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let r = self.forward_eval(y)?;
        Ok(y.sub(&r)?.map(|v| v.max(T::zero()).min(T::one())))
    }

    /// Back-propagates `grad_r` through the cached train-mode forward pass.
    ///
    /// The cache is consumed; a second call without a new forward fails.
    pub fn backward(&mut self, grad_r: &Tensor<T>) -> Result<Gradients<T>> {
        let cache = self.cache.take().ok_or(Error::MissingCache)?;
        let (mut g, tail) = conv2d_backward(&cache.tail_input, &self.tail, grad_r, 1)?;
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (g_in, bg) = block.backward(bc, &g, &self.activation)?;
            block_grads.push(bg);
            g = g_in;
        }
        block_grads.reverse();
        let g_pre = self.activation.backward(&cache.head_pre, &g)?;
        let (_, head) = conv2d_backward(&cache.input, &self.head, &g_pre, 1)?;
        Ok(Gradients { head, blocks: block_grads, tail })
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Learnable parameters in a fixed order matching [`Gradients::buffers`].
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        push_filter_mut(&mut out, "head", &mut self.head);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            push_filter_mut(&mut out, &format!("block{i:02}.conv3"), &mut b.conv3);
            push_filter_mut(&mut out, &format!("block{i:02}.conv1"), &mut b.conv1);
            let c = b.bn.channels();
            out.push(ParamMut { name: format!("block{i:02}.bn.gamma"), kind: ParamKind::BnGamma, dims: vec![c], values: &mut b.bn.gamma });
            out.push(ParamMut { name: format!("block{i:02}.bn.beta"), kind: ParamKind::BnBeta, dims: vec![c], values: &mut b.bn.beta });
        }
        push_filter_mut(&mut out, "tail", &mut self.tail);
        out
    }

    /// Every stored buffer, learnable parameters and BN running statistics alike.
    pub fn state(&self) -> Vec<ParamView<'_, T>> {
        let mut out = Vec::new();
        push_filter(&mut out, "head", &self.head);
        for (i, b) in self.blocks.iter().enumerate() {
            push_filter(&mut out, &format!("block{i:02}.conv3"), &b.conv3);
            push_filter(&mut out, &format!("block{i:02}.conv1"), &b.conv1);
            let c = b.bn.channels();
            for (suffix, kind, values) in [
                ("gamma", ParamKind::BnGamma, &b.bn.gamma),
                ("beta", ParamKind::BnBeta, &b.bn.beta),
                ("running_mean", ParamKind::BnRunningMean, &b.bn.running_mean),
                ("running_var", ParamKind::BnRunningVar, &b.bn.running_var),
            ] {
                out.push(ParamView { name: format!("block{i:02}.bn.{suffix}"), kind, dims: vec![c], values });
            }
        }
        push_filter(&mut out, "tail", &self.tail);
        out
    }

    /// Mutable counterpart of [`Self::state`], same order.
    pub fn state_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut out = Vec::new();
        push_filter_mut(&mut out, "head", &mut self.head);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            push_filter_mut(&mut out, &format!("block{i:02}.conv3"), &mut b.conv3);
            push_filter_mut(&mut out, &format!("block{i:02}.conv1"), &mut b.conv1);
            let c = b.bn.channels();
            let bn = &mut b.bn;
            for (suffix, kind, values) in [
                ("gamma", ParamKind::BnGamma, &mut bn.gamma),
                ("beta", ParamKind::BnBeta, &mut bn.beta),
                ("running_mean", ParamKind::BnRunningMean, &mut bn.running_mean),
                ("running_var", ParamKind::BnRunningVar, &mut bn.running_var),
            ] {
                out.push(ParamMut { name: format!("block{i:02}.bn.{suffix}"), kind, dims: vec![c], values });
            }
        }
        push_filter_mut(&mut out, "tail", &mut self.tail);
        out
    }

    pub fn cast<U: Real>(&self) -> ResidualDenoiser<U> {
        let cast_bn = |bn: &BatchNormState<T>| {
            let conv = |v: &Vec<T>| v.iter().map(|&x| U::from_f64_lossy(x.as_f64())).collect();
            BatchNormState {
                gamma: conv(&bn.gamma),
                beta: conv(&bn.beta),
                running_mean: conv(&bn.running_mean),
                running_var: conv(&bn.running_var),
                eps: bn.eps,
                stat_momentum: bn.stat_momentum,
                mode: bn.mode,
            }
        };
        ResidualDenoiser {
            config: self.config.clone(),
            activation: self.activation,
            head: self.head.cast(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block { conv3: b.conv3.cast(), conv1: b.conv1.cast(), bn: cast_bn(&b.bn) })
                .collect(),
            tail: self.tail.cast(),
            cache: None,
        }
    }
}

fn filter_dims<T: Real>(f: &Filter<T>) -> Vec<usize> {
    f.weights().shape().as_array().to_vec()
}

fn push_filter<'a, T: Real>(out: &mut Vec<ParamView<'a, T>>, prefix: &str, f: &'a Filter<T>) {
    out.push(ParamView { name: format!("{prefix}.weight"), kind: ParamKind::ConvWeight, dims: filter_dims(f), values: f.weights().as_slice() });
    out.push(ParamView { name: format!("{prefix}.bias"), kind: ParamKind::ConvBias, dims: vec![f.c_out()], values: f.bias() });
}

fn push_filter_mut<'a, T: Real>(out: &mut Vec<ParamMut<'a, T>>, prefix: &str, f: &'a mut Filter<T>) {
    let dims = filter_dims(f);
    let c_out = f.c_out();
    let (w, b) = split_filter(f);
    out.push(ParamMut { name: format!("{prefix}.weight"), kind: ParamKind::ConvWeight, dims, values: w });
    out.push(ParamMut { name: format!("{prefix}.bias"), kind: ParamKind::ConvBias, dims: vec![c_out], values: b });
}

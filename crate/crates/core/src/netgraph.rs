//! Sequential (single-chain) networks: ordered layer specs plus parameters,
//! shape propagation, forward/backward passes, and the two reference
//! architectures used throughout the toolkit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::ops::Activation;

use crate::ops::{
    activation_backward, activation_forward, batchnorm_backward, batchnorm_forward,
    conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward,
    BatchNormParams, BnCache, ConvParams,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    CenterCrop,
    Activation,
}

impl LayerKind {
    /// Producing layers own filters and parameters; crop and activation-only
    /// layers pass channels through.
    pub fn is_producing(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::ConvTranspose)
    }
}

/// One layer of the chain. `index` is the 1-based position in the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub bias: bool,
    pub batchnorm: bool,
    pub activation: Activation,
    pub prunable: bool,
    /// Target spatial extents; only meaningful for `CenterCrop`.
    pub crop: Option<(usize, usize)>,
}

impl LayerSpec {
    fn geom(&self) -> crate::ops::conv::Geom {
        crate::ops::conv::Geom {
            kh: self.kernel.0,
            kw: self.kernel.1,
            sh: self.stride.0,
            sw: self.stride.1,
            ph: self.padding.0,
            pw: self.padding.1,
        }
    }

    /// Output `(c, h, w)` given the input `(c, h, w)`.
    pub fn output_shape(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input;
        match self.kind {
            LayerKind::Conv => {
                let (oh, ow) = self.geom().conv_out(h, w)?;
                Ok((self.out_channels, oh, ow))
            }
            LayerKind::ConvTranspose => {
                let (oh, ow) = self.geom().deconv_out(h, w)?;
                Ok((self.out_channels, oh, ow))
            }
            LayerKind::CenterCrop => {
                let (th, tw) = self.crop.ok_or_else(|| {
                    Error::InvalidConfig(format!("layer {}: center_crop without a target", self.index))
                })?;
                if th > h || tw > w {
                    return Err(Error::InvalidGeometry(format!(
                        "layer {}: crop target {th}x{tw} exceeds input {h}x{w}",
                        self.index
                    )));
                }
                Ok((c, th, tw))
            }
            LayerKind::Activation => Ok((c, h, w)),
        }
    }
}

/// Parameters of one producing layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<S: Scalar> {
    pub conv: ConvParams<S>,
    pub bn: Option<BatchNormParams<S>>,
}

/// Serializable architecture description; this is what checkpoint manifests
/// and the `--arch` config file contain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A sequential network: specs plus parameters. The channel-compatibility
/// invariant (out_channels of layer i equals in_channels of layer i+1 across
/// pass-through layers) is enforced by `validate` and preserved by pruning.
#[derive(Clone, Debug)]
pub struct NetworkGraph<S: Scalar> {
    pub layers: Vec<LayerSpec>,
    pub params: Vec<Option<BlockParams<S>>>,
    pub input_shape: (usize, usize, usize),
    pub output_shape: (usize, usize, usize),
}

/// Activations captured by a forward pass, consumed by `backward`.
pub struct ForwardCache<S: Scalar> {
    batch: usize,
    mode: Mode,
    conv_inputs: Vec<Option<Tensor<S>>>,
    bn_inputs: Vec<Option<Tensor<S>>>,
    bn_caches: Vec<Option<BnCache<S>>>,
    act_inputs: Vec<Option<Tensor<S>>>,
    crop_src: Vec<Option<(usize, usize, usize, usize)>>, // (h, w, off_y, off_x)
    weight_sig: Vec<Option<Vec<usize>>>,
}

/// Per-layer gradients congruent to the network parameters.
#[derive(Clone, Debug)]
pub struct GradSet<S: Scalar> {
    pub layers: Vec<Option<BlockGrads<S>>>,
}

#[derive(Clone, Debug)]
pub struct BlockGrads<S: Scalar> {
    pub weights: Tensor<S>,
    pub bias: Option<Tensor<S>>,
    pub gamma: Option<Tensor<S>>,
    pub beta: Option<Tensor<S>>,
}

impl<S: Scalar> GradSet<S> {
    /// Gradient tensors in the same order as `NetworkGraph::trainable_params_mut`.
    pub fn trainable(&self) -> Vec<&Tensor<S>> {
        let mut out = Vec::new();
        for g in self.layers.iter().flatten() {
            out.push(&g.weights);
            if let Some(b) = &g.bias {
                out.push(b);
            }
            if let Some(gm) = &g.gamma {
                out.push(gm);
            }
            if let Some(bt) = &g.beta {
                out.push(bt);
            }
        }
        out
    }
}

fn at_layer(index: usize, e: Error) -> Error {
    match e {
        e @ Error::AtLayer { .. } => e,
        e => Error::AtLayer { layer: index, source: Box::new(e) },
    }
}

impl<S: Scalar> NetworkGraph<S> {
    /// Build a network from specs with zero weights and identity batchnorm.
    pub fn from_spec_list(
        input_shape: (usize, usize, usize),
        layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        let mut params = Vec::with_capacity(layers.len());
        for spec in &layers {
            if spec.kind.is_producing() {
                let wshape = match spec.kind {
                    LayerKind::Conv => vec![spec.out_channels, spec.in_channels, spec.kernel.0, spec.kernel.1],
                    LayerKind::ConvTranspose => vec![spec.in_channels, spec.out_channels, spec.kernel.0, spec.kernel.1],
                    _ => unreachable!(),
                };
                let bias = spec.bias.then(|| Tensor::zeros(vec![spec.out_channels]));
                let conv = ConvParams::new(Tensor::zeros(wshape), bias, spec.stride, spec.padding)?;
                let bn = spec.batchnorm.then(|| BatchNormParams::identity(spec.out_channels));
                params.push(Some(BlockParams { conv, bn }));
            } else {
                params.push(None);
            }
        }
        let mut net = NetworkGraph { layers, params, input_shape, output_shape: (0, 0, 0) };
        let shapes = net.layer_shapes(input_shape)?;
        net.output_shape = shapes.last().copied().unwrap_or(input_shape);
        net.validate()?;
        Ok(net)
    }

    pub fn from_config(cfg: &ArchConfig) -> Result<Self> {
        Self::from_spec_list(cfg.input_shape, cfg.layers.clone())
    }

    pub fn to_config(&self) -> ArchConfig {
        ArchConfig { input_shape: self.input_shape, layers: self.layers.clone() }
    }

    /// Statically propagated output shapes, one per layer.
    pub fn layer_shapes(&self, input: (usize, usize, usize)) -> Result<Vec<(usize, usize, usize)>> {
        let mut cur = input;
        let mut out = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            cur = spec.output_shape(cur).map_err(|e| at_layer(spec.index, e))?;
            out.push(cur);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != self.params.len() {
            return Err(Error::ContractViolation("spec/param list length mismatch".into()));
        }
        let mut c = self.input_shape.0;
        let mut last_producing = None;
        for (pos, spec) in self.layers.iter().enumerate() {
            if spec.index != pos + 1 {
                return Err(Error::InvalidConfig(format!(
                    "layer at position {pos} carries index {}, expected {}",
                    spec.index,
                    pos + 1
                )));
            }
            if spec.kind.is_producing() {
                if spec.in_channels != c {
                    return Err(Error::shape(
                        format!("layer {} input channels", spec.index),
                        c,
                        spec.in_channels,
                    ));
                }
                let p = self.params[pos].as_ref().ok_or_else(|| {
                    Error::ContractViolation(format!("layer {} missing parameters", spec.index))
                })?;
                let ws = p.conv.weights.shape();
                let want = match spec.kind {
                    LayerKind::Conv => [spec.out_channels, spec.in_channels, spec.kernel.0, spec.kernel.1],
                    LayerKind::ConvTranspose => [spec.in_channels, spec.out_channels, spec.kernel.0, spec.kernel.1],
                    _ => unreachable!(),
                };
                if ws != want {
                    return Err(Error::shape(
                        format!("layer {} weights", spec.index),
                        format!("{want:?}"),
                        format!("{ws:?}"),
                    ));
                }
                if spec.bias != p.conv.bias.is_some() {
                    return Err(Error::ContractViolation(format!(
                        "layer {} bias flag disagrees with parameters",
                        spec.index
                    )));
                }
                if let Some(bn) = &p.bn {
                    bn.validate()?;
                    if bn.channels() != spec.out_channels {
                        return Err(Error::shape(
                            format!("layer {} batchnorm channels", spec.index),
                            spec.out_channels,
                            bn.channels(),
                        ));
                    }
                } else if spec.batchnorm {
                    return Err(Error::ContractViolation(format!(
                        "layer {} batchnorm flag disagrees with parameters",
                        spec.index
                    )));
                }
                c = spec.out_channels;
                last_producing = Some(spec);
            } else if self.params[pos].is_some() {
                return Err(Error::ContractViolation(format!(
                    "non-producing layer {} carries parameters",
                    spec.index
                )));
            }
        }
        if let Some(last) = last_producing {
            if last.prunable {
                return Err(Error::InvalidConfig(
                    "the final producing layer must not be prunable (its output channels are the map format)".into(),
                ));
            }
        }
        // shape propagation must reach the recorded output shape
        let shapes = self.layer_shapes(self.input_shape)?;
        let got = shapes.last().copied().unwrap_or(self.input_shape);
        if got != self.output_shape {
            return Err(Error::shape("network output shape", format!("{:?}", self.output_shape), format!("{got:?}")));
        }
        Ok(())
    }

    /// Positions (into `layers`) of the producing layers, in order.
    pub fn producing_positions(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind.is_producing())
            .map(|(i, _)| i)
            .collect()
    }

    /// K, the number of producing layers.
    pub fn producing_count(&self) -> usize {
        self.layers.iter().filter(|s| s.kind.is_producing()).count()
    }

    /// Filter count per producing layer, in order.
    pub fn layer_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|s| s.kind.is_producing())
            .map(|s| s.out_channels)
            .collect()
    }

    fn check_batch(&self, batch: &Tensor<S>) -> Result<()> {
        let (c, h, w) = self.input_shape;
        if batch.rank() != 4 || batch.dim(1) != c || batch.dim(2) != h || batch.dim(3) != w {
            return Err(Error::shape(
                "network input",
                format!("[n, {c}, {h}, {w}]"),
                format!("{:?}", batch.shape()),
            ));
        }
        Ok(())
    }

    /// Forward pass capturing the activations backward needs. Training mode
    /// updates batchnorm running statistics on `self`.
    pub fn forward(&mut self, batch: &Tensor<S>, mode: Mode) -> Result<(Tensor<S>, ForwardCache<S>)> {
        self.check_batch(batch)?;
        let n_layers = self.layers.len();
        let mut cache = ForwardCache {
            batch: batch.dim(0),
            mode,
            conv_inputs: vec![None; n_layers],
            bn_inputs: vec![None; n_layers],
            bn_caches: (0..n_layers).map(|_| None).collect(),
            act_inputs: vec![None; n_layers],
            crop_src: vec![None; n_layers],
            weight_sig: vec![None; n_layers],
        };
        let mut cur = batch.clone();
        let mut updates: Vec<(usize, crate::ops::RunningUpdate<S>)> = Vec::new();
        for pos in 0..n_layers {
            let spec = &self.layers[pos];
            let idx = spec.index;
            match spec.kind {
                LayerKind::Conv | LayerKind::ConvTranspose => {
                    let bp = self.params[pos].as_ref().expect("validated producing layer");
                    cache.weight_sig[pos] = Some(bp.conv.weights.shape().to_vec());
                    let y = match spec.kind {
                        LayerKind::Conv => conv2d_forward(&cur, &bp.conv),
                        _ => conv_transpose2d_forward(&cur, &bp.conv),
                    }
                    .map_err(|e| at_layer(idx, e))?;
                    cache.conv_inputs[pos] = Some(cur);
                    let y = if let Some(bn) = &bp.bn {
                        cache.bn_inputs[pos] = Some(y.clone());
                        let (z, train_out) =
                            batchnorm_forward(&y, bn, mode == Mode::Train).map_err(|e| at_layer(idx, e))?;
                        if let Some((bc, upd)) = train_out {
                            cache.bn_caches[pos] = Some(bc);
                            updates.push((pos, upd));
                        }
                        z
                    } else {
                        y
                    };
                    cache.act_inputs[pos] = Some(y.clone());
                    cur = activation_forward(&y, spec.activation);
                }
                LayerKind::CenterCrop => {
                    let (th, tw) = spec.crop.expect("validated crop layer");
                    let (h, w) = (cur.dim(2), cur.dim(3));
                    let (y, off) = center_crop(&cur, (th, tw)).map_err(|e| at_layer(idx, e))?;
                    cache.crop_src[pos] = Some((h, w, off.0, off.1));
                    cur = y;
                }
                LayerKind::Activation => {
                    cache.act_inputs[pos] = Some(cur.clone());
                    cur = activation_forward(&cur, spec.activation);
                }
            }
        }
        for (pos, upd) in updates {
            let bn = self.params[pos]
                .as_mut()
                .and_then(|p| p.bn.as_mut())
                .expect("update for a batchnorm layer");
            bn.running_mean = upd.mean;
            bn.running_var = upd.var;
        }
        Ok((cur, cache))
    }

    /// Pure eval-mode forward; never mutates the network.
    pub fn forward_eval(&self, batch: &Tensor<S>) -> Result<Tensor<S>> {
        self.forward_eval_inner(batch, None)
    }

    /// Eval-mode forward that zeroes masked channels after each producing
    /// layer's block, emulating filter removal without structural surgery.
    /// `masks` is aligned with the producing layers.
    pub fn forward_eval_masked(&self, batch: &Tensor<S>, masks: &[Vec<bool>]) -> Result<Tensor<S>> {
        if masks.len() != self.producing_count() {
            return Err(Error::ContractViolation(format!(
                "mask count {} != producing layer count {}",
                masks.len(),
                self.producing_count()
            )));
        }
        self.forward_eval_inner(batch, Some(masks))
    }

    fn forward_eval_inner(&self, batch: &Tensor<S>, masks: Option<&[Vec<bool>]>) -> Result<Tensor<S>> {
        self.check_batch(batch)?;
        let mut cur = batch.clone();
        let mut prod_i = 0usize;
        for (pos, spec) in self.layers.iter().enumerate() {
            let idx = spec.index;
            match spec.kind {
                LayerKind::Conv | LayerKind::ConvTranspose => {
                    let bp = self.params[pos].as_ref().expect("validated producing layer");
                    let y = match spec.kind {
                        LayerKind::Conv => conv2d_forward(&cur, &bp.conv),
                        _ => conv_transpose2d_forward(&cur, &bp.conv),
                    }
                    .map_err(|e| at_layer(idx, e))?;
                    let y = if let Some(bn) = &bp.bn {
                        batchnorm_forward(&y, bn, false).map_err(|e| at_layer(idx, e))?.0
                    } else {
                        y
                    };
                    cur = activation_forward(&y, spec.activation);
                    if let Some(masks) = masks {
                        let mask = &masks[prod_i];
                        if mask.len() != spec.out_channels {
                            return Err(Error::PlanMismatch {
                                layer: idx,
                                msg: format!("mask length {} != {} filters", mask.len(), spec.out_channels),
                            });
                        }
                        zero_masked_channels(&mut cur, mask);
                    }
                    prod_i += 1;
                }
                LayerKind::CenterCrop => {
                    let (th, tw) = spec.crop.expect("validated crop layer");
                    cur = center_crop(&cur, (th, tw)).map_err(|e| at_layer(idx, e))?.0;
                }
                LayerKind::Activation => {
                    cur = activation_forward(&cur, spec.activation);
                }
            }
        }
        Ok(cur)
    }

    /// Eval forward over a batch, optionally splitting items across worker
    /// threads. Results are identical to the sequential path because batch
    /// items never interact in eval mode.
    pub fn forward_eval_batch(&self, batch: &Tensor<S>, threads: usize) -> Result<Tensor<S>> {
        self.check_batch(batch)?;
        let n = batch.dim(0);
        if threads <= 1 || n == 1 {
            return self.forward_eval(batch);
        }
        let (c, h, w) = self.input_shape;
        let (oc, oh, ow) = self.output_shape;
        let in_len = c * h * w;
        let out_len = oc * oh * ow;
        let mut out = Tensor::zeros(vec![n, oc, oh, ow]);
        let workers = threads.min(n);
        let per = n.div_ceil(workers);
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (wi, chunk) in out.data_mut().chunks_mut(per * out_len).enumerate() {
                let start = wi * per;
                handles.push(scope.spawn(move || -> Result<()> {
                    for (j, dst) in chunk.chunks_mut(out_len).enumerate() {
                        let i = start + j;
                        let item =
                            Tensor::from_vec(vec![1, c, h, w], batch.data()[i * in_len..][..in_len].to_vec())?;
                        let y = self.forward_eval(&item)?;
                        dst.copy_from_slice(y.data());
                    }
                    Ok(())
                }));
            }
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for r in results {
            r?;
        }
        Ok(out)
    }

    /// Backward pass from a cache produced by `forward` on this same network.
    pub fn backward(&self, cache: &ForwardCache<S>, grad_out: &Tensor<S>) -> Result<GradSet<S>> {
        let (oc, oh, ow) = self.output_shape;
        let expect = [cache.batch, oc, oh, ow];
        if grad_out.shape() != expect {
            return Err(Error::shape("grad_out", format!("{expect:?}"), format!("{:?}", grad_out.shape())));
        }
        if cache.weight_sig.len() != self.layers.len() {
            return Err(Error::ContractViolation("cache does not match network depth".into()));
        }
        for (pos, sig) in cache.weight_sig.iter().enumerate() {
            if let Some(sig) = sig {
                let cur = self.params[pos].as_ref().map(|p| p.conv.weights.shape().to_vec());
                if cur.as_deref() != Some(sig.as_slice()) {
                    return Err(Error::ContractViolation(format!(
                        "stale forward cache: layer {} weights changed since the forward pass",
                        self.layers[pos].index
                    )));
                }
            }
        }

        let mut grads = GradSet { layers: (0..self.layers.len()).map(|_| None).collect() };
        let mut g = grad_out.clone();
        for pos in (0..self.layers.len()).rev() {
            let spec = &self.layers[pos];
            let idx = spec.index;
            match spec.kind {
                LayerKind::Conv | LayerKind::ConvTranspose => {
                    let bp = self.params[pos].as_ref().expect("validated producing layer");
                    let act_in = cache.act_inputs[pos]
                        .as_ref()
                        .ok_or_else(|| Error::ContractViolation(format!("cache missing layer {idx}")))?;
                    g = activation_backward(act_in, spec.activation, &g);
                    let (mut gamma, mut beta) = (None, None);
                    if let Some(bn) = &bp.bn {
                        let bn_in = cache.bn_inputs[pos]
                            .as_ref()
                            .ok_or_else(|| Error::ContractViolation(format!("cache missing layer {idx}")))?;
                        let bn_cache = match cache.mode {
                            Mode::Train => Some(cache.bn_caches[pos].as_ref().ok_or_else(|| {
                                Error::ContractViolation(format!("train cache missing batch stats at layer {idx}"))
                            })?),
                            Mode::Eval => None,
                        };
                        let (gx, gg, gb) =
                            batchnorm_backward(bn_in, bn, bn_cache, &g).map_err(|e| at_layer(idx, e))?;
                        g = gx;
                        gamma = Some(gg);
                        beta = Some(gb);
                    }
                    let conv_in = cache.conv_inputs[pos]
                        .as_ref()
                        .ok_or_else(|| Error::ContractViolation(format!("cache missing layer {idx}")))?;
                    let (gx, gw, gb) = match spec.kind {
                        LayerKind::Conv => conv2d_backward(conv_in, &bp.conv, &g),
                        _ => conv_transpose2d_backward(conv_in, &bp.conv, &g),
                    }
                    .map_err(|e| at_layer(idx, e))?;
                    grads.layers[pos] = Some(BlockGrads { weights: gw, bias: gb, gamma, beta });
                    g = gx;
                }
                LayerKind::CenterCrop => {
                    let (h, w, oy, ox) = cache.crop_src[pos]
                        .ok_or_else(|| Error::ContractViolation(format!("cache missing layer {idx}")))?;
                    g = uncrop(&g, h, w, oy, ox);
                }
                LayerKind::Activation => {
                    let act_in = cache.act_inputs[pos]
                        .as_ref()
                        .ok_or_else(|| Error::ContractViolation(format!("cache missing layer {idx}")))?;
                    g = activation_backward(act_in, spec.activation, &g);
                }
            }
        }
        Ok(grads)
    }

    /// Kaiming-style fan-in initialization, fully determined by the seed.
    /// Biases and batchnorm shift go to zero, batchnorm scale to one, and
    /// running statistics reset.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (spec, params) in self.layers.iter().zip(self.params.iter_mut()) {
            let Some(bp) = params else { continue };
            let fan_in = (spec.in_channels * spec.kernel.0 * spec.kernel.1) as f64;
            let std = (2.0 / fan_in).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in bp.conv.weights.data_mut() {
                *v = S::from_f64_lossy(normal.sample(&mut rng));
            }
            if let Some(b) = &mut bp.conv.bias {
                *b = Tensor::zeros(vec![spec.out_channels]);
            }
            if let Some(bn) = &mut bp.bn {
                let c = spec.out_channels;
                bn.gamma = Tensor::full(vec![c], S::one());
                bn.beta = Tensor::zeros(vec![c]);
                bn.running_mean = Tensor::zeros(vec![c]);
                bn.running_var = Tensor::full(vec![c], S::one());
            }
        }
    }

    /// Named parameter tensors in checkpoint order: per producing layer the
    /// conv weights, optional bias, then batchnorm gamma/beta and running
    /// statistics.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (spec, params) in self.layers.iter().zip(&self.params) {
            let Some(bp) = params else { continue };
            let i = spec.index;
            out.push((format!("layer{i}.conv.weight"), &bp.conv.weights));
            if let Some(b) = &bp.conv.bias {
                out.push((format!("layer{i}.conv.bias"), b));
            }
            if let Some(bn) = &bp.bn {
                out.push((format!("layer{i}.bn.gamma"), &bn.gamma));
                out.push((format!("layer{i}.bn.beta"), &bn.beta));
                out.push((format!("layer{i}.bn.running_mean"), &bn.running_mean));
                out.push((format!("layer{i}.bn.running_var"), &bn.running_var));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<S>)> {
        let mut out = Vec::new();
        for (spec, params) in self.layers.iter().zip(self.params.iter_mut()) {
            let Some(bp) = params else { continue };
            let i = spec.index;
            out.push((format!("layer{i}.conv.weight"), &mut bp.conv.weights));
            if let Some(b) = &mut bp.conv.bias {
                out.push((format!("layer{i}.conv.bias"), b));
            }
            if let Some(bn) = &mut bp.bn {
                out.push((format!("layer{i}.bn.gamma"), &mut bn.gamma));
                out.push((format!("layer{i}.bn.beta"), &mut bn.beta));
                out.push((format!("layer{i}.bn.running_mean"), &mut bn.running_mean));
                out.push((format!("layer{i}.bn.running_var"), &mut bn.running_var));
            }
        }
        out
    }

    /// Trainable tensors (weights, bias, gamma, beta; running statistics are
    /// buffers) in the same order as `GradSet::trainable`.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for bp in self.params.iter_mut().flatten() {
            out.push(&mut bp.conv.weights);
            if let Some(b) = &mut bp.conv.bias {
                out.push(b);
            }
            if let Some(bn) = &mut bp.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// Elementwise cast of every parameter into another scalar type; used to
    /// run an f32 network through the f64 gradient-check path.
    pub fn cast<T: Scalar>(&self) -> NetworkGraph<T> {
        let params = self
            .params
            .iter()
            .map(|p| {
                p.as_ref().map(|bp| BlockParams {
                    conv: ConvParams {
                        weights: bp.conv.weights.cast(),
                        bias: bp.conv.bias.as_ref().map(|b| b.cast()),
                        stride: bp.conv.stride,
                        padding: bp.conv.padding,
                    },
                    bn: bp.bn.as_ref().map(|bn| BatchNormParams {
                        gamma: bn.gamma.cast(),
                        beta: bn.beta.cast(),
                        running_mean: bn.running_mean.cast(),
                        running_var: bn.running_var.cast(),
                        epsilon: T::from_f64_lossy(bn.epsilon.to_f64_lossy()),
                        momentum: T::from_f64_lossy(bn.momentum.to_f64_lossy()),
                    }),
                })
            })
            .collect();
        NetworkGraph {
            layers: self.layers.clone(),
            params,
            input_shape: self.input_shape,
            output_shape: self.output_shape,
        }
    }
}

fn zero_masked_channels<S: Scalar>(t: &mut Tensor<S>, mask: &[bool]) {
    let (n, c, h, w) = (t.dim(0), t.dim(1), t.dim(2), t.dim(3));
    let hw = h * w;
    for i in 0..n {
        for (ci, &keep) in mask.iter().enumerate().take(c) {
            if !keep {
                t.data_mut()[(i * c + ci) * hw..][..hw].fill(S::zero());
            }
        }
    }
}

fn center_crop<S: Scalar>(x: &Tensor<S>, target: (usize, usize)) -> Result<(Tensor<S>, (usize, usize))> {
    let (n, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (th, tw) = target;
    if th > h || tw > w {
        return Err(Error::InvalidGeometry(format!("crop target {th}x{tw} exceeds input {h}x{w}")));
    }
    let oy = (h - th) / 2;
    let ox = (w - tw) / 2;
    let mut out = Tensor::zeros(vec![n, c, th, tw]);
    for i in 0..n {
        for ci in 0..c {
            for y in 0..th {
                let src = &x.data()[((i * c + ci) * h + oy + y) * w + ox..][..tw];
                out.data_mut()[((i * c + ci) * th + y) * tw..][..tw].copy_from_slice(src);
            }
        }
    }
    Ok((out, (oy, ox)))
}

fn uncrop<S: Scalar>(g: &Tensor<S>, h: usize, w: usize, oy: usize, ox: usize) -> Tensor<S> {
    let (n, c, th, tw) = (g.dim(0), g.dim(1), g.dim(2), g.dim(3));
    let mut out = Tensor::zeros(vec![n, c, h, w]);
    for i in 0..n {
        for ci in 0..c {
            for y in 0..th {
                let src = &g.data()[((i * c + ci) * th + y) * tw..][..tw];
                out.data_mut()[((i * c + ci) * h + oy + y) * w + ox..][..tw].copy_from_slice(src);
            }
        }
    }
    out
}

const ENCODER_SLOPE: f64 = 0.2;

struct ChainBuilder {
    layers: Vec<LayerSpec>,
    channels: usize,
}

impl ChainBuilder {
    fn new(in_channels: usize) -> Self {
        ChainBuilder { layers: Vec::new(), channels: in_channels }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        kind: LayerKind,
        out_c: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        activation: Activation,
        prunable: bool,
    ) {
        let index = self.layers.len() + 1;
        self.layers.push(LayerSpec {
            index,
            kind,
            kernel,
            stride,
            padding,
            in_channels: self.channels,
            out_channels: out_c,
            bias: true,
            batchnorm: true,
            activation,
            prunable,
            crop: None,
        });
        self.channels = out_c;
    }

    fn conv(&mut self, out_c: usize, k: (usize, usize), s: (usize, usize), p: (usize, usize)) {
        self.push(LayerKind::Conv, out_c, k, s, p, Activation::leaky(ENCODER_SLOPE), true);
    }

    fn deconv(&mut self, out_c: usize, k: (usize, usize), s: (usize, usize), p: (usize, usize)) {
        self.push(LayerKind::ConvTranspose, out_c, k, s, p, Activation::leaky(ENCODER_SLOPE), true);
    }

    fn crop(&mut self, target: (usize, usize)) {
        let index = self.layers.len() + 1;
        self.layers.push(LayerSpec {
            index,
            kind: LayerKind::CenterCrop,
            kernel: (0, 0),
            stride: (1, 1),
            padding: (0, 0),
            in_channels: self.channels,
            out_channels: self.channels,
            bias: false,
            batchnorm: false,
            activation: Activation::Identity,
            prunable: false,
            crop: Some(target),
        });
    }

    fn out_conv(&mut self, out_c: usize, k: (usize, usize), s: (usize, usize), p: (usize, usize)) {
        self.push(LayerKind::Conv, out_c, k, s, p, Activation::Tanh, false);
    }
}

/// The full-size sequential encoder-decoder surrogate: seismic input
/// `(5, 1000, 70)` (the singleton receiver-width axis of the native
/// `5 x 1000 x 1 x 70` layout is folded away) down to a `512 x 1 x 1`
/// bottleneck and back up to a `(1, 70, 70)` velocity map.
///
/// 25 producing layers: a 14-block encoder (time-axis kernels early, 3x3
/// stride-2 blocks later, an 8x5 valid conv last), a 10-block decoder of
/// alternating stride-2 deconvs and 3x3 convs, and the tanh output conv.
/// All channel widths are plain config values; nothing here is special-cased.
pub fn build_inversionnet_default<S: Scalar>() -> NetworkGraph<S> {
    let mut b = ChainBuilder::new(5);
    // encoder: collapse the 1000-step time axis first, then both axes
    b.conv(32, (7, 1), (2, 1), (3, 0)); // 500 x 70
    b.conv(32, (3, 1), (1, 1), (1, 0));
    b.conv(64, (3, 1), (2, 1), (1, 0)); // 250 x 70
    b.conv(64, (3, 1), (1, 1), (1, 0));
    b.conv(128, (3, 1), (2, 1), (1, 0)); // 125 x 70
    b.conv(128, (3, 1), (1, 1), (1, 0));
    b.conv(256, (3, 3), (2, 2), (1, 1)); // 63 x 35
    b.conv(256, (3, 3), (1, 1), (1, 1));
    b.conv(256, (3, 3), (2, 2), (1, 1)); // 32 x 18
    b.conv(256, (3, 3), (1, 1), (1, 1));
    b.conv(512, (3, 3), (2, 2), (1, 1)); // 16 x 9
    b.conv(512, (3, 3), (1, 1), (1, 1));
    b.conv(512, (3, 3), (2, 2), (1, 1)); // 8 x 5
    b.conv(512, (8, 5), (1, 1), (0, 0)); // 1 x 1 bottleneck
    // decoder: 5 deconv+conv pairs up to 80 x 80
    b.deconv(512, (5, 5), (1, 1), (0, 0)); // 5 x 5
    b.conv(512, (3, 3), (1, 1), (1, 1));
    b.deconv(256, (4, 4), (2, 2), (1, 1)); // 10 x 10
    b.conv(256, (3, 3), (1, 1), (1, 1));
    b.deconv(128, (4, 4), (2, 2), (1, 1)); // 20 x 20
    b.conv(128, (3, 3), (1, 1), (1, 1));
    b.deconv(64, (4, 4), (2, 2), (1, 1)); // 40 x 40
    b.conv(64, (3, 3), (1, 1), (1, 1));
    b.deconv(32, (4, 4), (2, 2), (1, 1)); // 80 x 80
    b.conv(32, (3, 3), (1, 1), (1, 1));
    b.crop((70, 70));
    b.out_conv(1, (3, 3), (1, 1), (1, 1));
    NetworkGraph::from_spec_list((5, 1000, 70), b.layers).expect("default architecture is well-formed")
}

/// Desk-scale stand-in with the same structure: `(3, 64, 16)` input,
/// `(1, 16, 16)` output, 6 producing layers, under 30K parameters.
pub fn build_tiny_testnet<S: Scalar>() -> NetworkGraph<S> {
    let mut b = ChainBuilder::new(3);
    b.conv(8, (7, 1), (4, 1), (3, 0)); // 16 x 16
    b.conv(16, (3, 3), (2, 2), (1, 1)); // 8 x 8
    b.conv(32, (3, 3), (2, 2), (1, 1)); // 4 x 4
    b.deconv(16, (4, 4), (2, 2), (1, 1)); // 8 x 8
    b.deconv(8, (4, 4), (2, 2), (0, 0)); // 18 x 18
    b.crop((16, 16));
    b.out_conv(1, (3, 3), (1, 1), (1, 1));
    NetworkGraph::from_spec_list((3, 64, 16), b.layers).expect("tiny architecture is well-formed")
}

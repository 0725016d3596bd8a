//! Layerwise structured filter pruning: L1-norm importance scores, uniform
//! per-layer filter selection, structural surgery with downstream kernel
//! removal, and an exhaustive reference solver for the selection problem on
//! tiny networks.
//!
//! A filter of a conv layer is one slab along weight axis 0; for a transposed
//! conv it is one slab along weight axis 1 (both produce one output channel).
//! Removing filter j of layer i also deletes the matching input-kernel slice
//! from the next producing layer, which is why model size falls roughly with
//! the square of the pruning ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::mae_loss;
use crate::netgraph::{LayerKind, NetworkGraph};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Cap on the number of mask combinations `exhaustive_plan` will evaluate.
pub const EXHAUSTIVE_GUARD: u64 = 1_000_000;

/// Per-layer importance scores, one vector per producing layer.
#[derive(Clone, Debug)]
pub struct FilterScores {
    pub layers: Vec<LayerScores>,
}

#[derive(Clone, Debug)]
pub struct LayerScores {
    /// 1-based index of the layer in the chain.
    pub layer: usize,
    pub prunable: bool,
    pub scores: Vec<f64>,
}

/// Binary keep masks, one per producing layer. Invariants: every mask keeps
/// at least one filter, and non-prunable layers keep everything.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub layers: Vec<LayerMask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMask {
    pub layer: usize,
    /// 1 = keep, 0 = prune.
    pub mask: Vec<u8>,
}

impl LayerMask {
    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }

    pub fn keep_flags(&self) -> Vec<bool> {
        self.mask.iter().map(|&m| m != 0).collect()
    }
}

impl PruningPlan {
    /// All-ones plan for a network (the r = 0 identity).
    pub fn identity<S: Scalar>(net: &NetworkGraph<S>) -> Self {
        let layers = net
            .layers
            .iter()
            .filter(|s| s.kind.is_producing())
            .map(|s| LayerMask { layer: s.index, mask: vec![1; s.out_channels] })
            .collect();
        PruningPlan { layers }
    }

    /// Total number of filters this plan removes.
    pub fn pruned_count(&self) -> usize {
        self.layers.iter().map(|l| l.mask.len() - l.kept()).sum()
    }

    fn validate_against<S: Scalar>(&self, net: &NetworkGraph<S>) -> Result<()> {
        let producing: Vec<_> = net.layers.iter().filter(|s| s.kind.is_producing()).collect();
        if producing.len() != self.layers.len() {
            return Err(Error::ContractViolation(format!(
                "plan covers {} layers, network has {} producing layers",
                self.layers.len(),
                producing.len()
            )));
        }
        for (spec, lm) in producing.iter().zip(&self.layers) {
            if lm.layer != spec.index {
                return Err(Error::PlanMismatch {
                    layer: spec.index,
                    msg: format!("plan names layer {}", lm.layer),
                });
            }
            if lm.mask.len() != spec.out_channels {
                return Err(Error::PlanMismatch {
                    layer: spec.index,
                    msg: format!("mask length {} != {} filters", lm.mask.len(), spec.out_channels),
                });
            }
            if lm.kept() == 0 {
                return Err(Error::PlanMismatch { layer: spec.index, msg: "mask keeps no filter".into() });
            }
            if !spec.prunable && lm.kept() != lm.mask.len() {
                return Err(Error::PlanMismatch {
                    layer: spec.index,
                    msg: "non-prunable layer must keep all filters".into(),
                });
            }
        }
        Ok(())
    }
}

/// L1-norm importance score of every filter: the sum of |w| over the filter's
/// weight slab, excluding bias and batchnorm parameters.
pub fn l1_scores<S: Scalar>(net: &NetworkGraph<S>) -> Result<FilterScores> {
    if !net.layers.iter().any(|s| s.kind.is_producing() && s.prunable) {
        return Err(Error::InvalidConfig("network has no prunable layer".into()));
    }
    let mut layers = Vec::new();
    for (spec, params) in net.layers.iter().zip(&net.params) {
        if !spec.kind.is_producing() {
            continue;
        }
        let bp = params.as_ref().expect("producing layer has parameters");
        let w = &bp.conv.weights;
        let n = spec.out_channels;
        let mut scores = vec![0.0f64; n];
        match spec.kind {
            LayerKind::Conv => {
                // filter j = weights[j, :, :, :]
                let slab = w.len() / n;
                for (j, score) in scores.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for &v in &w.data()[j * slab..(j + 1) * slab] {
                        acc += v.to_f64_lossy().abs();
                    }
                    *score = acc;
                }
            }
            LayerKind::ConvTranspose => {
                // filter j = weights[:, j, :, :]
                let (ci, co, kh, kw) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
                let kk = kh * kw;
                for (j, score) in scores.iter_mut().enumerate().take(co) {
                    let mut acc = 0.0;
                    for i in 0..ci {
                        for &v in &w.data()[(i * co + j) * kk..][..kk] {
                            acc += v.to_f64_lossy().abs();
                        }
                    }
                    *score = acc;
                }
            }
            _ => unreachable!(),
        }
        layers.push(LayerScores { layer: spec.index, prunable: spec.prunable, scores });
    }
    Ok(FilterScores { layers })
}

/// Number of filters kept when pruning `n` filters at ratio `r`:
/// `max(1, round_half_up(n * (1 - r)))`.
pub fn kept_filters(n: usize, r: f64) -> usize {
    let kept = (n as f64 * (1.0 - r) + 0.5).floor() as usize;
    kept.max(1)
}

/// Select the filters to prune per layer: the `n - kept` smallest scores go,
/// ties broken by pruning the lower filter index first. Non-prunable layers
/// keep everything.
pub fn select_filters(scores: &FilterScores, r: f64) -> Result<PruningPlan> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidConfig(format!("per-iteration ratio must lie in [0,1), got {r}")));
    }
    let mut layers = Vec::with_capacity(scores.layers.len());
    for ls in &scores.layers {
        let n = ls.scores.len();
        let mut mask = vec![1u8; n];
        if ls.prunable {
            let kept = kept_filters(n, r);
            let prune = n - kept;
            let mut order: Vec<usize> = (0..n).collect();
            // ascending score; equal scores prune the lower index first
            order.sort_by(|&a, &b| {
                ls.scores[a]
                    .partial_cmp(&ls.scores[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            for &j in order.iter().take(prune) {
                mask[j] = 0;
            }
        }
        layers.push(LayerMask { layer: ls.layer, mask });
    }
    Ok(PruningPlan { layers })
}

/// Structurally apply a plan: pruned filters lose their weight slab, bias
/// entry and batchnorm channel, and the next producing layer loses the
/// matching input-kernel slices. Returns a new network satisfying all graph
/// invariants.
pub fn apply_plan<S: Scalar>(net: &NetworkGraph<S>, plan: &PruningPlan) -> Result<NetworkGraph<S>> {
    plan.validate_against(net)?;
    let mut out = net.clone();
    let mut incoming: Vec<bool> = vec![true; net.input_shape.0]; // input channels are fixed by the data
    let mut prod_i = 0usize;
    for pos in 0..out.layers.len() {
        if !out.layers[pos].kind.is_producing() {
            continue;
        }
        let keep_out = plan.layers[prod_i].keep_flags();
        let spec = &mut out.layers[pos];
        let bp = out.params[pos].as_mut().expect("producing layer has parameters");

        let kind = spec.kind;
        let w = &bp.conv.weights;
        let (d0, d1, kh, kw) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
        let (out_axis_len, in_axis_len) = match kind {
            LayerKind::Conv => (d0, d1),
            LayerKind::ConvTranspose => (d1, d0),
            _ => unreachable!(),
        };
        if in_axis_len != incoming.len() {
            return Err(Error::PlanMismatch {
                layer: spec.index,
                msg: format!("expected {} input channels, weights have {}", incoming.len(), in_axis_len),
            });
        }
        if out_axis_len != keep_out.len() {
            return Err(Error::PlanMismatch {
                layer: spec.index,
                msg: format!("expected {} filters, weights have {}", keep_out.len(), out_axis_len),
            });
        }

        let new_in = incoming.iter().filter(|&&k| k).count();
        let new_out = keep_out.iter().filter(|&&k| k).count();
        let kk = kh * kw;
        let mut data = Vec::with_capacity(new_in * new_out * kk);
        match kind {
            LayerKind::Conv => {
                for (o, &ko) in keep_out.iter().enumerate() {
                    if !ko {
                        continue;
                    }
                    for (i, &ki) in incoming.iter().enumerate() {
                        if !ki {
                            continue;
                        }
                        data.extend_from_slice(&w.data()[(o * d1 + i) * kk..][..kk]);
                    }
                }
                bp.conv.weights = Tensor::from_vec(vec![new_out, new_in, kh, kw], data)?;
            }
            LayerKind::ConvTranspose => {
                for (i, &ki) in incoming.iter().enumerate() {
                    if !ki {
                        continue;
                    }
                    for (o, &ko) in keep_out.iter().enumerate() {
                        if !ko {
                            continue;
                        }
                        data.extend_from_slice(&w.data()[(i * d1 + o) * kk..][..kk]);
                    }
                }
                bp.conv.weights = Tensor::from_vec(vec![new_in, new_out, kh, kw], data)?;
            }
            _ => unreachable!(),
        }
        if let Some(b) = &bp.conv.bias {
            bp.conv.bias = Some(filter_vec(b, &keep_out)?);
        }
        if let Some(bn) = &mut bp.bn {
            // running statistics are per-channel state and travel with the filter
            bn.gamma = filter_vec(&bn.gamma, &keep_out)?;
            bn.beta = filter_vec(&bn.beta, &keep_out)?;
            bn.running_mean = filter_vec(&bn.running_mean, &keep_out)?;
            bn.running_var = filter_vec(&bn.running_var, &keep_out)?;
        }
        spec.in_channels = new_in;
        spec.out_channels = new_out;
        incoming = keep_out;
        prod_i += 1;
    }
    // pass-through layers carry whatever channel count reaches them
    let mut c = out.input_shape.0;
    for spec in &mut out.layers {
        if spec.kind.is_producing() {
            c = spec.out_channels;
        } else {
            spec.in_channels = c;
            spec.out_channels = c;
        }
    }
    let shapes = out.layer_shapes(out.input_shape)?;
    out.output_shape = shapes.last().copied().unwrap_or(out.input_shape);
    out.validate()?;
    Ok(out)
}

fn filter_vec<S: Scalar>(t: &Tensor<S>, keep: &[bool]) -> Result<Tensor<S>> {
    if t.len() != keep.len() {
        return Err(Error::shape("per-channel vector", keep.len(), t.len()));
    }
    let data: Vec<S> = t
        .data()
        .iter()
        .zip(keep)
        .filter_map(|(&v, &k)| k.then_some(v))
        .collect();
    Tensor::from_vec(vec![data.len()], data)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact minimizer of the filter-selection problem restricted to `eval_batch`:
/// enumerate every mask combination with the required per-layer cardinality,
/// evaluate the masked network's MAE, and return the best plan with its loss.
///
/// Refuses to run when the combination count exceeds [`EXHAUSTIVE_GUARD`].
pub fn exhaustive_plan<S: Scalar>(
    net: &NetworkGraph<S>,
    r: f64,
    eval_inputs: &Tensor<S>,
    eval_targets: &Tensor<S>,
) -> Result<(PruningPlan, f64)> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::InvalidConfig(format!("per-iteration ratio must lie in [0,1), got {r}")));
    }
    if eval_inputs.dim(0) == 0 {
        return Err(Error::EmptyDataset("exhaustive_plan eval batch".into()));
    }
    let producing: Vec<_> = net.layers.iter().filter(|s| s.kind.is_producing()).collect();
    let mut per_layer: Vec<(usize, usize, usize, bool)> = Vec::new(); // (index, n, prune, prunable)
    let mut cases: u128 = 1;
    for spec in &producing {
        let n = spec.out_channels;
        let prune = if spec.prunable { n - kept_filters(n, r) } else { 0 };
        if spec.prunable {
            cases = cases.saturating_mul(binomial(n, prune));
        }
        per_layer.push((spec.index, n, prune, spec.prunable));
    }
    if cases > EXHAUSTIVE_GUARD as u128 {
        return Err(Error::CombinatorialGuard { cases, limit: EXHAUSTIVE_GUARD });
    }

    // odometer over per-layer combinations, each in lexicographic order
    let mut combos: Vec<Combinations> = per_layer
        .iter()
        .map(|&(_, n, prune, _)| Combinations::new(n, prune))
        .collect();
    let mut best: Option<(PruningPlan, f64)> = None;
    loop {
        let masks: Vec<Vec<bool>> = per_layer
            .iter()
            .zip(&combos)
            .map(|(&(_, n, _, _), c)| {
                let mut m = vec![true; n];
                for &j in c.current() {
                    m[j] = false;
                }
                m
            })
            .collect();
        let pred = net.forward_eval_masked(eval_inputs, &masks)?;
        let (loss, _) = mae_loss(&pred, eval_targets)?;
        let loss = loss.to_f64_lossy();
        let better = match &best {
            None => true,
            Some((_, b)) => loss < *b,
        };
        if better {
            let layers = per_layer
                .iter()
                .zip(&masks)
                .map(|(&(index, _, _, _), m)| LayerMask {
                    layer: index,
                    mask: m.iter().map(|&k| k as u8).collect(),
                })
                .collect();
            best = Some((PruningPlan { layers }, loss));
        }
        // advance the odometer
        let mut pos = combos.len();
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one combination evaluated"));
            }
            pos -= 1;
            if combos[pos].advance() {
                break;
            }
            combos[pos].reset();
        }
    }
}

/// Lexicographic k-subsets of {0..n}.
struct Combinations {
    n: usize,
    current: Vec<usize>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, current: (0..k).collect() }
    }

    fn current(&self) -> &[usize] {
        &self.current
    }

    fn reset(&mut self) {
        let k = self.current.len();
        self.current = (0..k).collect();
    }

    fn advance(&mut self) -> bool {
        let k = self.current.len();
        if k == 0 {
            return false;
        }
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.current[i] < self.n - (k - i) {
                self.current[i] += 1;
                for j in i + 1..k {
                    self.current[j] = self.current[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
}

//! Three-stage compression control flow: N rounds of (prune at the
//! per-iteration ratio, finetune), a validation-loss gate against the
//! threshold T, and an optional retrain-from-scratch stage whose winner is
//! picked by validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::mae_loss;
use crate::metrics::{metrics, MetricTriple};
use crate::netgraph::{Mode, NetworkGraph};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::pruner::{apply_plan, l1_scores, select_filters, PruningPlan};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Target cumulative pruning ratio R in [0, 1).
    pub ratio: f64,
    /// Number of prune+finetune iterations N.
    pub iterations: usize,
    /// Loss threshold T gating stage 3; `None` defaults to 1.1x the baseline
    /// validation loss.
    pub threshold: Option<f64>,
    /// Total finetuning epoch budget, split as total/N per iteration with the
    /// remainder going to the last iteration. Retraining uses the same total.
    pub total_epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub batch_size: usize,
}

impl PipelineConfig {
    pub fn new(ratio: f64, iterations: usize) -> Self {
        PipelineConfig {
            ratio,
            iterations,
            threshold: None,
            total_epochs: 120,
            adam: AdamConfig::default(),
            seed: 0,
            batch_size: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(Error::InvalidConfig(format!("pruning ratio must lie in [0,1), got {}", self.ratio)));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iteration count must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        self.adam.validate()
    }
}

/// Paired `(inputs, targets)` samples along the first axis.
#[derive(Clone, Debug)]
pub struct DataSet<S: Scalar> {
    pub inputs: Tensor<S>,
    pub targets: Tensor<S>,
}

impl<S: Scalar> DataSet<S> {
    pub fn new(inputs: Tensor<S>, targets: Tensor<S>) -> Result<Self> {
        if inputs.rank() != 4 || targets.rank() != 4 {
            return Err(Error::shape("dataset rank", 4, format!("{}/{}", inputs.rank(), targets.rank())));
        }
        if inputs.dim(0) != targets.dim(0) {
            return Err(Error::shape("dataset sample count", inputs.dim(0), targets.dim(0)));
        }
        Ok(DataSet { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn item_sizes(&self) -> (usize, usize) {
        (self.inputs.len() / self.len(), self.targets.len() / self.len())
    }

    fn gather(&self, idx: &[usize]) -> (Tensor<S>, Tensor<S>) {
        let (isz, tsz) = self.item_sizes();
        let mut xs = Vec::with_capacity(idx.len() * isz);
        let mut ys = Vec::with_capacity(idx.len() * tsz);
        for &i in idx {
            xs.extend_from_slice(&self.inputs.data()[i * isz..(i + 1) * isz]);
            ys.extend_from_slice(&self.targets.data()[i * tsz..(i + 1) * tsz]);
        }
        let mut xshape = self.inputs.shape().to_vec();
        xshape[0] = idx.len();
        let mut yshape = self.targets.shape().to_vec();
        yshape[0] = idx.len();
        (
            Tensor::from_vec(xshape, xs).expect("gather preserves item size"),
            Tensor::from_vec(yshape, ys).expect("gather preserves item size"),
        )
    }
}

#[derive(Clone, Debug)]
pub struct DataSplits<S: Scalar> {
    pub train: DataSet<S>,
    pub val: DataSet<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Finetuned,
    Retrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub loss: f64,
    pub metrics: MetricTriple,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub ratio: f64,
    pub epochs: usize,
    /// Filter count of every producing layer after this iteration's pruning.
    pub layer_widths: Vec<usize>,
    /// Mean training loss per epoch.
    pub train_curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressReport {
    pub config: PipelineConfig,
    pub per_iteration_ratio: f64,
    pub baseline_val_loss: f64,
    pub threshold_used: f64,
    pub iterations: Vec<IterationRecord>,
    pub plans: Vec<PruningPlan>,
    pub finetuned: EvalResult,
    pub retrained: Option<EvalResult>,
    pub stage3_ran: bool,
    /// Provenance of the returned network.
    pub branch: Provenance,
    pub winner_loss: f64,
    pub final_metrics: MetricTriple,
}

/// Per-layer achieved reduction of one compression run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRatioCheck {
    pub layer: usize,
    pub kept_before: usize,
    pub kept_after: usize,
    pub achieved: f64,
    pub target: f64,
}

/// Per-iteration ratio r so that N rounds compound to the target ratio R:
/// `r = 1 - (1 - R)^(1/N)`.
pub fn iter_ratio(big_r: f64, n: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&big_r) {
        return Err(Error::InvalidConfig(format!("pruning ratio must lie in [0,1), got {big_r}")));
    }
    if n < 1 {
        return Err(Error::InvalidConfig("iteration count must be >= 1".into()));
    }
    Ok(1.0 - (1.0 - big_r).powf(1.0 / n as f64))
}

/// Epochs assigned to iteration `k` (1-based): integer division with the
/// remainder appended to the final iteration.
pub fn epochs_for_iteration(total: usize, n: usize, k: usize) -> usize {
    let base = total / n;
    if k == n {
        base + total % n
    } else {
        base
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn finetune_inner<S: Scalar>(
    net: &mut NetworkGraph<S>,
    data: &DataSet<S>,
    epochs: usize,
    cfg: &PipelineConfig,
    epoch_offset: usize,
) -> Result<Vec<f64>> {
    let n = data.len();
    let mut states: Vec<AdamState<S>> = net
        .trainable_params_mut()
        .iter()
        .map(|t| AdamState::new(t.shape(), &cfg.adam))
        .collect();
    let mut curve = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for e in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch_offset + e));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for batch_idx in order.chunks(cfg.batch_size) {
            let (bx, by) = data.gather(batch_idx);
            let (out, cache) = net.forward(&bx, Mode::Train)?;
            let (loss, grad) = mae_loss(&out, &by)?;
            let lf = loss.to_f64_lossy();
            if !lf.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("training loss at epoch {}", epoch_offset + e + 1),
                });
            }
            loss_sum += lf * batch_idx.len() as f64;
            let grads = net.backward(&cache, &grad)?;
            let grad_tensors = grads.trainable();
            let mut params = net.trainable_params_mut();
            debug_assert_eq!(params.len(), grad_tensors.len());
            for ((p, g), st) in params.iter_mut().zip(grad_tensors).zip(states.iter_mut()) {
                adam_step(p, g, st)?;
            }
        }
        curve.push(loss_sum / n as f64);
    }
    Ok(curve)
}

/// Adam/MAE training loop. Deterministic under a fixed config: the epoch
/// shuffles derive from the config seed. Returns the per-epoch mean training
/// loss.
pub fn finetune<S: Scalar>(
    net: &mut NetworkGraph<S>,
    data: &DataSet<S>,
    epochs: usize,
    cfg: &PipelineConfig,
) -> Result<Vec<f64>> {
    if epochs < 1 {
        return Err(Error::InvalidConfig("finetune needs at least one epoch".into()));
    }
    cfg.validate()?;
    finetune_inner(net, data, epochs, cfg, 0)
}

/// Mean absolute error over a dataset in eval mode, batched.
pub fn validation_loss<S: Scalar>(
    net: &NetworkGraph<S>,
    data: &DataSet<S>,
    batch_size: usize,
) -> Result<f64> {
    let n = data.len();
    let mut abs_sum = 0.0f64;
    let mut count = 0usize;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (bx, by) = data.gather(chunk);
        let out = net.forward_eval(&bx)?;
        for (&p, &t) in out.data().iter().zip(by.data()) {
            abs_sum += (p.to_f64_lossy() - t.to_f64_lossy()).abs();
        }
        count += out.len();
    }
    let loss = abs_sum / count as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { context: "validation loss".into() });
    }
    Ok(loss)
}

/// Eval-mode predictions for a whole dataset, batched.
pub fn predict<S: Scalar>(
    net: &NetworkGraph<S>,
    data: &DataSet<S>,
    batch_size: usize,
) -> Result<Tensor<S>> {
    let n = data.len();
    let (oc, oh, ow) = net.output_shape;
    let item = oc * oh * ow;
    let mut out = Vec::with_capacity(n * item);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (bx, _) = data.gather(chunk);
        let y = net.forward_eval(&bx)?;
        out.extend_from_slice(y.data());
    }
    Tensor::from_vec(vec![n, oc, oh, ow], out)
}

const RETRAIN_SEED_STREAM: u64 = 0x5254_5241_494e; // "RTRAIN"

/// Stage 3: keep the pruned topology, drop the surviving weights, and train
/// from a fresh random initialization (a different draw than the original
/// seed) for the full epoch budget.
pub fn retrain_from_scratch<S: Scalar>(
    topology: &NetworkGraph<S>,
    train: &DataSet<S>,
    cfg: &PipelineConfig,
) -> Result<NetworkGraph<S>> {
    cfg.validate()?;
    let mut net = topology.clone();
    net.init_weights(cfg.seed ^ RETRAIN_SEED_STREAM);
    if cfg.total_epochs > 0 {
        finetune_inner(&mut net, train, cfg.total_epochs, cfg, 0)?;
    }
    Ok(net)
}

/// The full three-stage pipeline. Returns the lightweight network and a
/// report with per-iteration records, both candidate losses when stage 3 ran,
/// and the branch taken.
pub fn compress<S: Scalar>(
    net: NetworkGraph<S>,
    data: &DataSplits<S>,
    cfg: &PipelineConfig,
) -> Result<(NetworkGraph<S>, CompressReport)> {
    cfg.validate()?;
    let baseline_val_loss = validation_loss(&net, &data.val, cfg.batch_size)?;
    let threshold_used = cfg.threshold.unwrap_or(1.1 * baseline_val_loss);
    let r = iter_ratio(cfg.ratio, cfg.iterations)?;

    let mut current = net;
    let mut iterations = Vec::with_capacity(cfg.iterations);
    let mut plans: Vec<PruningPlan> = Vec::with_capacity(cfg.iterations);
    let mut epochs_done = 0usize;
    for k in 1..=cfg.iterations {
        let scores = l1_scores(&current)?;
        let plan = select_filters(&scores, r)?;
        current = apply_plan(&current, &plan)?;
        let epochs = epochs_for_iteration(cfg.total_epochs, cfg.iterations, k);
        let train_curve = if epochs > 0 {
            finetune_inner(&mut current, &data.train, epochs, cfg, epochs_done)?
        } else {
            Vec::new()
        };
        epochs_done += epochs;
        iterations.push(IterationRecord {
            iteration: k,
            ratio: r,
            epochs,
            layer_widths: current.layer_widths(),
            train_curve,
        });
        plans.push(plan);
    }

    let loss_finetuned = validation_loss(&current, &data.val, cfg.batch_size)?;
    let pred = predict(&current, &data.val, cfg.batch_size)?;
    let finetuned = EvalResult {
        loss: loss_finetuned,
        metrics: metrics(&pred, &data.val.targets)?,
        provenance: Provenance::Finetuned,
    };

    let (winner, retrained, branch) = if loss_finetuned <= threshold_used {
        (current, None, Provenance::Finetuned)
    } else {
        let candidate = retrain_from_scratch(&current, &data.train, cfg)?;
        let loss_retrained = validation_loss(&candidate, &data.val, cfg.batch_size)?;
        let pred_r = predict(&candidate, &data.val, cfg.batch_size)?;
        let retrained = EvalResult {
            loss: loss_retrained,
            metrics: metrics(&pred_r, &data.val.targets)?,
            provenance: Provenance::Retrained,
        };
        // strict improvement required; ties keep the finetuned candidate
        if loss_retrained < loss_finetuned {
            (candidate, Some(retrained), Provenance::Retrained)
        } else {
            (current, Some(retrained), Provenance::Finetuned)
        }
    };

    let stage3_ran = retrained.is_some();
    let winner_eval = match branch {
        Provenance::Finetuned => &finetuned,
        Provenance::Retrained => retrained.as_ref().expect("stage 3 produced the winner"),
    };
    let report = CompressReport {
        config: cfg.clone(),
        per_iteration_ratio: r,
        baseline_val_loss,
        threshold_used,
        iterations,
        plans,
        winner_loss: winner_eval.loss,
        final_metrics: winner_eval.metrics,
        finetuned,
        retrained,
        stage3_ran,
        branch,
    };
    Ok((winner, report))
}

/// Achieved cumulative reduction per prunable layer against the target R.
pub fn cumulative_ratio_check<S: Scalar>(
    before: &NetworkGraph<S>,
    after: &NetworkGraph<S>,
    target: f64,
) -> Result<Vec<LayerRatioCheck>> {
    let b: Vec<_> = before.layers.iter().filter(|s| s.kind.is_producing()).collect();
    let a: Vec<_> = after.layers.iter().filter(|s| s.kind.is_producing()).collect();
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.kind != y.kind) {
        return Err(Error::LineageMismatch("networks do not share a topology lineage".into()));
    }
    Ok(b.iter()
        .zip(&a)
        .filter(|(sb, _)| sb.prunable)
        .map(|(sb, sa)| LayerRatioCheck {
            layer: sb.index,
            kept_before: sb.out_channels,
            kept_after: sa.out_channels,
            achieved: 1.0 - sa.out_channels as f64 / sb.out_channels as f64,
            target,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::{gen_synthetic, SyntheticTask};
    use crate::netgraph::build_tiny_testnet;
    use crate::pruner::kept_filters;

    fn tiny_data(count: usize, seed: u64) -> DataSet<f32> {
        let task = SyntheticTask { seed, ..Default::default() };
        let (inputs, maps) = gen_synthetic(&task, count).unwrap();
        DataSet::new(inputs, maps).unwrap()
    }

    fn quick_cfg(ratio: f64, iters: usize, epochs: usize) -> PipelineConfig {
        PipelineConfig {
            total_epochs: epochs,
            batch_size: 16,
            seed: 7,
            ..PipelineConfig::new(ratio, iters)
        }
    }

    #[test]
    fn iter_ratio_known_values() {
        assert_eq!(iter_ratio(0.9, 1).unwrap(), 0.9);
        assert!((iter_ratio(0.75, 2).unwrap() - 0.5).abs() < 1e-12);
        assert!((iter_ratio(0.9, 3).unwrap() - 0.535_841_116_638_722_1).abs() < 1e-12);
        assert!(iter_ratio(1.0, 1).is_err());
        assert!(iter_ratio(-0.1, 1).is_err());
        assert!(iter_ratio(0.5, 0).is_err());
    }

    #[test]
    fn epoch_split_assigns_remainder_to_last() {
        let total: usize = (1..=3).map(|k| epochs_for_iteration(10, 3, k)).sum();
        assert_eq!(total, 10);
        assert_eq!(epochs_for_iteration(10, 3, 1), 3);
        assert_eq!(epochs_for_iteration(10, 3, 3), 4);
        assert_eq!(epochs_for_iteration(120, 5, 5), 24);
    }

    #[test]
    fn zero_lr_keeps_trainable_params() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(3);
        let data = tiny_data(24, 1);
        let mut cfg = quick_cfg(0.0, 1, 2);
        cfg.adam.lr = 0.0;
        let before: Vec<Vec<f32>> = net.named_tensors().iter().map(|(_, t)| t.data().to_vec()).collect();
        finetune(&mut net, &data, 2, &cfg).unwrap();
        for ((name, t), old) in net.named_tensors().iter().zip(&before) {
            if name.contains("running") {
                continue; // buffers move in training mode by design
            }
            assert!(t.data().iter().zip(old).all(|(a, b)| a == b), "{name} changed");
        }
    }

    #[test]
    fn training_reduces_loss_on_tiny_task() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(11);
        let data = tiny_data(96, 5);
        let cfg = quick_cfg(0.0, 1, 8);
        let curve = finetune(&mut net, &data, 8, &cfg).unwrap();
        assert!(curve.last().unwrap() < curve.first().unwrap(), "curve {curve:?}");
    }

    #[test]
    fn finetune_is_deterministic() {
        let run = || {
            let mut net = build_tiny_testnet::<f32>();
            net.init_weights(2);
            let data = tiny_data(32, 9);
            finetune(&mut net, &data, 3, &quick_cfg(0.0, 1, 3)).unwrap();
            net.named_tensors()
                .iter()
                .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_ratio_compress_keeps_structure() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(4);
        let widths = net.layer_widths();
        let data = DataSplits { train: tiny_data(32, 2), val: tiny_data(16, 3) };
        let mut cfg = quick_cfg(0.0, 2, 2);
        cfg.threshold = Some(f64::INFINITY);
        let (out, report) = compress(net, &data, &cfg).unwrap();
        assert_eq!(out.layer_widths(), widths);
        assert!(!report.stage3_ran);
        assert_eq!(report.branch, Provenance::Finetuned);
    }

    #[test]
    fn per_iteration_rounding_rule_applies_per_round() {
        // R=0.75, N=2 means r=0.5 applied twice per layer
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(6);
        let widths = net.layer_widths();
        let data = DataSplits { train: tiny_data(16, 7), val: tiny_data(16, 8) };
        let mut cfg = quick_cfg(0.75, 2, 0);
        cfg.threshold = Some(f64::INFINITY);
        let (out, report) = compress(net, &data, &cfg).unwrap();
        let expect: Vec<usize> = widths
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                if i + 1 == widths.len() {
                    n // final producing layer is not prunable
                } else {
                    kept_filters(kept_filters(n, 0.5), 0.5)
                }
            })
            .collect();
        assert_eq!(out.layer_widths(), expect);
        assert!((report.per_iteration_ratio - 0.5).abs() < 1e-12);
        // widths shrink monotonically across iterations whenever r > 0
        let w1: usize = report.iterations[0].layer_widths.iter().sum();
        let w2: usize = report.iterations[1].layer_widths.iter().sum();
        assert!(w2 < w1);
    }

    #[test]
    fn unreachable_threshold_runs_stage3_and_picks_winner() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(12);
        let data = DataSplits { train: tiny_data(32, 21), val: tiny_data(16, 22) };
        let mut cfg = quick_cfg(0.3, 1, 2);
        cfg.threshold = Some(-1.0);
        let (_, report) = compress(net, &data, &cfg).unwrap();
        assert!(report.stage3_ran);
        let lr = report.retrained.as_ref().unwrap().loss;
        let lf = report.finetuned.loss;
        assert_eq!(report.winner_loss, lf.min(lr));
        match report.branch {
            Provenance::Retrained => assert!(lr < lf),
            Provenance::Finetuned => assert!(lf <= lr),
        }
    }

    #[test]
    fn retrain_is_deterministic_and_differs_from_original_seed() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(7);
        let data = tiny_data(16, 2);
        let cfg = quick_cfg(0.0, 1, 0);
        let a = retrain_from_scratch(&net, &data, &cfg).unwrap();
        let b = retrain_from_scratch(&net, &data, &cfg).unwrap();
        for ((_, ta), (_, tb)) in a.named_tensors().iter().zip(b.named_tensors().iter()) {
            assert!(ta.iter().zip(tb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // epochs=0 returns the fresh initialization, and that draw is not the
        // original seed's draw
        let mut fresh = net.clone();
        fresh.init_weights(cfg.seed);
        let differs = a
            .named_tensors()
            .iter()
            .zip(fresh.named_tensors().iter())
            .any(|((_, x), (_, y))| x.iter().zip(y.iter()).any(|(p, q)| p != q));
        assert!(differs);
    }

    #[test]
    fn kept_sequence_for_width_64_at_r09_n3() {
        // 64 filters over three iterations at r = 1 - 0.1^(1/3) shrink
        // 30 -> 14 -> 6, achieving 1 - 6/64 = 0.90625
        let r = iter_ratio(0.9, 3).unwrap();
        let mut kept = 64usize;
        let mut seq = Vec::new();
        for _ in 0..3 {
            kept = kept_filters(kept, r);
            seq.push(kept);
        }
        assert_eq!(seq, vec![30, 14, 6]);
        assert!((1.0 - 6.0 / 64.0 - 0.90625f64).abs() < 1e-12);
    }

    #[test]
    fn cumulative_check_reports_achieved_ratio() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(1);
        let data = DataSplits { train: tiny_data(16, 1), val: tiny_data(16, 2) };
        let mut cfg = quick_cfg(0.5, 1, 0);
        cfg.threshold = Some(f64::INFINITY);
        let before = {
            let (out, _) = compress(net.clone(), &data, &cfg).unwrap();
            out
        };
        let checks = cumulative_ratio_check(&net, &before, 0.5).unwrap();
        for c in &checks {
            assert!((c.achieved - 0.5).abs() <= 1.5 / c.kept_before as f64, "{c:?}");
        }
        // R=0 achieves 0 everywhere
        let zero = cumulative_ratio_check(&net, &net, 0.0).unwrap();
        assert!(zero.iter().all(|c| c.achieved == 0.0));
    }
}

//! Parameter and FLOPs accounting per layer and per network, plus reduction
//! reports between a baseline and a pruned network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::{Activation, LayerKind, NetworkGraph};
use crate::scalar::Scalar;

/// The convention every report carries so numbers are self-describing.
pub const FLOPS_CONVENTION: &str = "1 MAC = 2 FLOPs; bias adds 1 op/output element, batchnorm \
     (eval, folded scale+shift) 2 ops/element, non-identity activation 1 op/element; center-crop \
     and identity activations are free; batchnorm running statistics are buffers, not trainable \
     parameters";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub layer: usize,
    pub kind: LayerKind,
    /// Trainable parameters: weights + bias + batchnorm gamma/beta.
    pub params: u64,
    /// Non-trainable per-channel state (batchnorm running statistics).
    pub buffers: u64,
    /// Forward FLOPs for one inference; `None` when only parameters were
    /// requested.
    pub flops: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReduction {
    pub layer: usize,
    pub params_pct: f64,
    pub flops_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub params_pct: f64,
    pub flops_pct: Option<f64>,
    pub per_layer: Vec<LayerReduction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub convention: String,
    pub rows: Vec<CostRow>,
    pub total_params: u64,
    pub total_buffers: u64,
    pub total_flops: Option<u64>,
    /// Present when this report compares a pruned network against a baseline.
    pub reduction: Option<ReductionSummary>,
}

fn kind_name(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Conv => "conv",
        LayerKind::ConvTranspose => "conv_transpose",
        LayerKind::CenterCrop => "center_crop",
        LayerKind::Activation => "activation",
    }
}

impl CostReport {
    fn from_rows(rows: Vec<CostRow>) -> Self {
        let total_params = rows.iter().map(|r| r.params).sum();
        let total_buffers = rows.iter().map(|r| r.buffers).sum();
        let total_flops = rows.iter().try_fold(0u64, |acc, r| r.flops.map(|f| acc + f));
        CostReport {
            convention: FLOPS_CONVENTION.to_string(),
            rows,
            total_params,
            total_buffers,
            total_flops,
            reduction: None,
        }
    }

    /// Aligned-column text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:>5}  {:<14} {:>14} {:>10} {:>18}\n", "layer", "kind", "params", "buffers", "flops"));
        for r in &self.rows {
            let flops = r.flops.map_or_else(|| "-".to_string(), |f| f.to_string());
            out.push_str(&format!(
                "{:>5}  {:<14} {:>14} {:>10} {:>18}\n",
                r.layer,
                kind_name(r.kind),
                r.params,
                r.buffers,
                flops
            ));
        }
        let flops = self.total_flops.map_or_else(|| "-".to_string(), |f| f.to_string());
        out.push_str(&format!(
            "{:>5}  {:<14} {:>14} {:>10} {:>18}\n",
            "total", "", self.total_params, self.total_buffers, flops
        ));
        if let Some(red) = &self.reduction {
            out.push_str(&format!(
                "reduction vs baseline: params {:.2}%{}\n",
                red.params_pct,
                red.flops_pct.map_or_else(String::new, |f| format!(", flops {f:.2}%"))
            ));
        }
        out
    }

    /// CSV rows (`layer,kind,params,buffers,flops`) for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,kind,params,buffers,flops\n");
        for r in &self.rows {
            let flops = r.flops.map_or_else(String::new, |f| f.to_string());
            out.push_str(&format!("{},{},{},{},{}\n", r.layer, kind_name(r.kind), r.params, r.buffers, flops));
        }
        out
    }
}

fn param_row(spec: &crate::netgraph::LayerSpec) -> (u64, u64) {
    if !spec.kind.is_producing() {
        return (0, 0);
    }
    let w = (spec.out_channels * spec.in_channels * spec.kernel.0 * spec.kernel.1) as u64;
    let b = if spec.bias { spec.out_channels as u64 } else { 0 };
    let bn = if spec.batchnorm { 2 * spec.out_channels as u64 } else { 0 };
    let buffers = if spec.batchnorm { 2 * spec.out_channels as u64 } else { 0 };
    (w + b + bn, buffers)
}

/// Trainable parameter count per layer and total. Structure-only: weight
/// values never matter.
pub fn param_count<S: Scalar>(net: &NetworkGraph<S>) -> CostReport {
    let rows = net
        .layers
        .iter()
        .map(|spec| {
            let (params, buffers) = param_row(spec);
            CostRow { layer: spec.index, kind: spec.kind, params, buffers, flops: None }
        })
        .collect();
    CostReport::from_rows(rows)
}

/// FLOPs for one forward pass at `input_shape`, plus the parameter counts.
pub fn flops_count<S: Scalar>(
    net: &NetworkGraph<S>,
    input_shape: (usize, usize, usize),
) -> Result<CostReport> {
    let shapes = net.layer_shapes(input_shape)?;
    let mut cur = input_shape;
    let mut rows = Vec::with_capacity(net.layers.len());
    for (spec, &out_shape) in net.layers.iter().zip(&shapes) {
        let (params, buffers) = param_row(spec);
        let (oc, oh, ow) = out_shape;
        let out_elems = (oc * oh * ow) as u64;
        let flops = match spec.kind {
            LayerKind::Conv | LayerKind::ConvTranspose => {
                let kk = (spec.kernel.0 * spec.kernel.1) as u64;
                let macs = match spec.kind {
                    // conv: every output element sees c_in * k_h * k_w taps
                    LayerKind::Conv => 2 * out_elems * spec.in_channels as u64 * kk,
                    // deconv: every input element scatters into c_out * k_h * k_w taps
                    LayerKind::ConvTranspose => {
                        let (_, ih, iw) = cur;
                        2 * (spec.in_channels * ih * iw) as u64 * spec.out_channels as u64 * kk
                    }
                    _ => unreachable!(),
                };
                let bias = if spec.bias { out_elems } else { 0 };
                let bn = if spec.batchnorm { 2 * out_elems } else { 0 };
                let act = if spec.activation == Activation::Identity { 0 } else { out_elems };
                macs + bias + bn + act
            }
            LayerKind::CenterCrop => 0,
            LayerKind::Activation => {
                if spec.activation == Activation::Identity {
                    0
                } else {
                    out_elems
                }
            }
        };
        rows.push(CostRow { layer: spec.index, kind: spec.kind, params, buffers, flops: Some(flops) });
        cur = out_shape;
    }
    Ok(CostReport::from_rows(rows))
}

fn pct(base: u64, new: u64) -> f64 {
    if base == 0 {
        0.0
    } else {
        100.0 * (1.0 - new as f64 / base as f64)
    }
}

/// Percentage reductions of `pruned` against `base`, per layer and total.
/// Both reports must come from the same layer lineage.
pub fn reduction_report(base: &CostReport, pruned: &CostReport) -> Result<CostReport> {
    if base.rows.len() != pruned.rows.len() {
        return Err(Error::LineageMismatch(format!(
            "{} layers vs {}",
            base.rows.len(),
            pruned.rows.len()
        )));
    }
    for (b, p) in base.rows.iter().zip(&pruned.rows) {
        if b.layer != p.layer || b.kind != p.kind {
            return Err(Error::LineageMismatch(format!(
                "layer {} ({:?}) vs layer {} ({:?})",
                b.layer, b.kind, p.layer, p.kind
            )));
        }
    }
    let per_layer = base
        .rows
        .iter()
        .zip(&pruned.rows)
        .map(|(b, p)| LayerReduction {
            layer: b.layer,
            params_pct: pct(b.params, p.params),
            flops_pct: b.flops.zip(p.flops).map(|(bf, pf)| pct(bf, pf)),
        })
        .collect();
    let mut out = pruned.clone();
    out.reduction = Some(ReductionSummary {
        params_pct: pct(base.total_params, pruned.total_params),
        flops_pct: base
            .total_flops
            .zip(pruned.total_flops)
            .map(|(b, p)| pct(b, p)),
        per_layer,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{build_tiny_testnet, Activation, LayerSpec, NetworkGraph};
    use crate::pruner::{apply_plan, l1_scores, select_filters};

    fn single_conv(in_c: usize, out_c: usize, k: usize, bias: bool, bn: bool) -> NetworkGraph<f32> {
        let layers = vec![LayerSpec {
            index: 1,
            kind: LayerKind::Conv,
            kernel: (k, k),
            stride: (1, 1),
            padding: (1, 1),
            in_channels: in_c,
            out_channels: out_c,
            bias,
            batchnorm: bn,
            activation: Activation::Identity,
            prunable: false,
            crop: None,
        }];
        NetworkGraph::from_spec_list((in_c, 8, 8), layers).unwrap()
    }

    #[test]
    fn conv_param_count_by_hand() {
        // conv 2->3 3x3 with bias and batchnorm: 54 + 3 + 6 = 63 trainable
        let net = single_conv(2, 3, 3, true, true);
        let report = param_count(&net);
        assert_eq!(report.total_params, 63);
        assert_eq!(report.total_buffers, 6);
    }

    #[test]
    fn empty_net_counts_zero() {
        let net = NetworkGraph::<f32>::from_spec_list((3, 4, 4), vec![]).unwrap();
        assert_eq!(param_count(&net).total_params, 0);
    }

    #[test]
    fn conv_flops_by_hand() {
        // conv 2->3 3x3 pad 1 on an 8x8 map, no bias/bn/activation:
        // 2*3*2*9*64 = 6912
        let net = single_conv(2, 3, 3, false, false);
        let report = flops_count(&net, (2, 8, 8)).unwrap();
        assert_eq!(report.rows[0].flops, Some(6912));
    }

    #[test]
    fn single_mac_is_two_flops() {
        // 1x1 conv 1->1 on a 1x1 map with identity activation disabled is
        // not representable (blocks always count their activation), so check
        // the MAC term alone plus bias.
        let mut net = single_conv(1, 1, 1, true, false);
        net.layers[0].padding = (0, 0);
        net.params[0].as_mut().unwrap().conv.padding = (0, 0);
        let net = NetworkGraph::<f32>::from_spec_list((1, 1, 1), net.layers).unwrap();
        let report = flops_count(&net, (1, 1, 1)).unwrap();
        // 2 (single MAC) + 1 (bias); the identity activation is free
        assert_eq!(report.rows[0].flops, Some(3));
    }

    #[test]
    fn tiny_testnet_golden_totals() {
        // golden numbers recorded from the first build of the tiny net
        let net = build_tiny_testnet::<f32>();
        let report = param_count(&net);
        assert_eq!(report.total_params, 16_483);
        assert_eq!(report.total_buffers, 162);
        let flops = flops_count(&net, net.input_shape).unwrap();
        assert_eq!(flops.total_flops, Some(971_904));
    }

    #[test]
    fn default_net_golden_totals() {
        // golden numbers recorded from the first build of the full-size net
        let net = crate::netgraph::build_inversionnet_default::<f32>();
        let report = param_count(&net);
        assert_eq!(report.total_params, 31_043_075);
        assert_eq!(report.total_buffers, 11_010);
        let flops = flops_count(&net, net.input_shape).unwrap();
        assert_eq!(flops.total_flops, Some(9_779_998_608));
    }

    #[test]
    fn identical_reports_reduce_zero_pct() {
        let net = build_tiny_testnet::<f32>();
        let r = flops_count(&net, net.input_shape).unwrap();
        let red = reduction_report(&r, &r).unwrap();
        let summary = red.reduction.unwrap();
        assert_eq!(summary.params_pct, 0.0);
        assert_eq!(summary.flops_pct, Some(0.0));
    }

    #[test]
    fn halved_params_reduce_fifty_pct() {
        let base = param_count(&single_conv(2, 4, 3, false, false));
        let half = param_count(&single_conv(1, 4, 3, false, false));
        let red = reduction_report(&base, &half).unwrap();
        assert_eq!(red.reduction.unwrap().params_pct, 50.0);
    }

    #[test]
    fn lineage_mismatch_rejected() {
        let a = param_count(&build_tiny_testnet::<f32>());
        let b = param_count(&single_conv(2, 3, 3, true, true));
        assert!(matches!(reduction_report(&a, &b), Err(Error::LineageMismatch(_))));
    }

    #[test]
    fn tiny_net_half_ratio_flops_reduction_band() {
        // interior layers scale by (1-R)^2 = 0.25, boundary layers by (1-R);
        // the tiny topology lands in [70%, 78%]
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(0);
        let plan = select_filters(&l1_scores(&net).unwrap(), 0.5).unwrap();
        let pruned = apply_plan(&net, &plan).unwrap();
        let base = flops_count(&net, net.input_shape).unwrap();
        let after = flops_count(&pruned, net.input_shape).unwrap();
        let red = reduction_report(&base, &after).unwrap();
        let pctv = red.reduction.unwrap().flops_pct.unwrap();
        assert!((70.0..=78.0).contains(&pctv), "flops reduction {pctv}%");
    }

    #[test]
    fn structure_only_invariance() {
        let mut a = build_tiny_testnet::<f32>();
        let base = flops_count(&a, a.input_shape).unwrap();
        a.init_weights(99);
        let after = flops_count(&a, a.input_shape).unwrap();
        assert_eq!(base, after);
    }
}

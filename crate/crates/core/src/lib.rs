//! Compression toolkit for sequential convolutional FWI surrogates.
//!
//! The crate covers the full loop: dense tensor kernels with hand-written
//! gradients, a sequential network graph, L1-norm structured filter pruning
//! with downstream kernel removal, the prune/finetune/retrain pipeline,
//! parameter/FLOPs accounting, quality metrics (MAE, RMSE, SSIM) and a
//! latency benchmark harness, plus NPY and checkpoint I/O and a synthetic
//! desk-scale dataset generator.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); production
//! code uses the `*32` aliases below while gradient checks instantiate the
//! same kernels with `f64`.

pub mod bench;
pub mod costs;
pub mod dataio;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod netgraph;
pub mod ops;
pub mod optim;
pub mod pipeline;
pub mod pruner;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use bench::{bench_latency, LatencyStats};
pub use costs::{flops_count, param_count, reduction_report, CostReport};
pub use loss::mae_loss;
pub use metrics::{metrics, one_minus_ssim, MetricTriple, SsimConfig};
pub use netgraph::{
    build_inversionnet_default, build_tiny_testnet, ArchConfig, LayerKind, LayerSpec, Mode,
    NetworkGraph,
};
pub use ops::{Activation, BatchNormParams, ConvParams};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use pipeline::{compress, finetune, iter_ratio, retrain_from_scratch, PipelineConfig};
pub use pruner::{apply_plan, exhaustive_plan, l1_scores, select_filters, FilterScores, PruningPlan};
pub use tensor::Tensor;

/// Production scalar type.
pub type Tensor32 = Tensor<f32>;
/// Wide scalar type for gradient checks.
pub type Tensor64 = Tensor<f64>;
pub type NetworkGraph32 = netgraph::NetworkGraph<f32>;
pub type NetworkGraph64 = netgraph::NetworkGraph<f64>;

//! Latency benchmark harness: warmup runs, then timed eval-mode forwards on
//! a fixed random input, reported as mean/std/min/max wall-clock times.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netgraph::NetworkGraph;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

// The benchmark input is fixed so repeated invocations time the same work.
const BENCH_INPUT_SEED: u64 = 0x00b3_ac4e;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub runs: usize,
    pub warmup: usize,
    /// Effective worker count used inside the forward pass.
    pub threads: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn summary(&self) -> String {
        format!(
            "{} runs (+{} warmup, {} thread{}): mean {:.3} ms, std {:.3} ms, min {:.3} ms, max {:.3} ms",
            self.runs,
            self.warmup,
            self.threads,
            if self.threads == 1 { "" } else { "s" },
            self.mean_ms,
            self.std_ms,
            self.min_ms,
            self.max_ms
        )
    }
}

/// Time `runs` eval-mode forwards of `net` on a fixed random input of shape
/// `(batch, c, h, w)`, after `warmup` unmeasured forwards. Single-threaded
/// unless `threads` raises the worker count (workers split the batch axis and
/// never change results). Measurement only: the network is untouched.
pub fn bench_latency<S: Scalar>(
    net: &NetworkGraph<S>,
    input_shape: (usize, usize, usize, usize),
    runs: usize,
    warmup: usize,
    threads: usize,
) -> Result<LatencyStats> {
    if runs < 1 {
        return Err(Error::InvalidConfig("bench needs at least one run".into()));
    }
    let (n, c, h, w) = input_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(BENCH_INPUT_SEED);
    let input = Tensor::from_fn(vec![n, c, h, w], |_| S::from_f64_lossy(rng.random_range(-1.0..1.0)));
    let threads = threads.max(1);

    for _ in 0..warmup {
        net.forward_eval_batch(&input, threads)?;
    }
    let mut samples_ms = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t0 = Instant::now();
        let out = net.forward_eval_batch(&input, threads)?;
        samples_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(&out);
    }

    let mean = samples_ms.iter().sum::<f64>() / runs as f64;
    let std = if runs > 1 {
        (samples_ms.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (runs - 1) as f64).sqrt()
    } else {
        0.0
    };
    let min = samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LatencyStats {
        runs,
        warmup,
        threads: threads.min(n),
        mean_ms: mean,
        std_ms: std,
        min_ms: min,
        max_ms: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::build_tiny_testnet;

    #[test]
    fn single_run_has_zero_std() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(1);
        let stats = bench_latency(&net, (1, 3, 64, 16), 1, 0, 1).unwrap();
        assert_eq!(stats.std_ms, 0.0);
        assert_eq!(stats.runs, 1);
    }

    #[test]
    fn order_statistics_hold() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(2);
        let stats = bench_latency(&net, (1, 3, 64, 16), 8, 2, 1).unwrap();
        assert!(stats.min_ms <= stats.mean_ms && stats.mean_ms <= stats.max_ms);
        assert!(stats.std_ms >= 0.0);
    }

    #[test]
    fn benchmarking_leaves_outputs_untouched() {
        let mut net = build_tiny_testnet::<f32>();
        net.init_weights(3);
        let x = Tensor::from_fn(vec![1, 3, 64, 16], |i| (i % 13) as f32 * 0.1 - 0.5);
        let before = net.forward_eval(&x).unwrap();
        bench_latency(&net, (1, 3, 64, 16), 3, 1, 1).unwrap();
        let after = net.forward_eval(&x).unwrap();
        assert!(before.iter().zip(after.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn zero_runs_rejected() {
        let net = build_tiny_testnet::<f32>();
        assert!(bench_latency(&net, (1, 3, 64, 16), 0, 0, 1).is_err());
    }
}

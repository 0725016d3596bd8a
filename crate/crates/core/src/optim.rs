//! Adam with bias correction; the only optimizer the pipeline uses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |b: f64| b > 0.0 && b < 1.0;
        if !ok(self.beta1) || !ok(self.beta2) {
            return Err(Error::InvalidConfig("adam betas must lie in (0,1)".into()));
        }
        if self.eps <= 0.0 || !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::InvalidConfig("adam lr must be >= 0 and eps > 0".into()));
        }
        Ok(())
    }
}

/// Optimizer state for one parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<S: Scalar> {
    pub step: u64,
    pub first_moment: Tensor<S>,
    pub second_moment: Tensor<S>,
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(shape: &[usize], cfg: &AdamConfig) -> Self {
        AdamState {
            step: 0,
            first_moment: Tensor::zeros(shape.to_vec()),
            second_moment: Tensor::zeros(shape.to_vec()),
            lr: S::from_f64_lossy(cfg.lr),
            beta1: S::from_f64_lossy(cfg.beta1),
            beta2: S::from_f64_lossy(cfg.beta2),
            eps: S::from_f64_lossy(cfg.eps),
        }
    }
}

/// One Adam update. Deterministic: identical inputs and state produce
/// bit-identical outputs. Rejects non-finite gradients.
pub fn adam_step<S: Scalar>(
    params: &mut Tensor<S>,
    grads: &Tensor<S>,
    state: &mut AdamState<S>,
) -> Result<()> {
    if params.shape() != grads.shape() || params.shape() != state.first_moment.shape() {
        return Err(Error::shape(
            "adam operands",
            format!("{:?}", params.shape()),
            format!("grads {:?}, moments {:?}", grads.shape(), state.first_moment.shape()),
        ));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite { context: "gradient passed to adam_step".into() });
    }
    state.step += 1;
    let t = state.step as i32;
    let one = S::one();
    let bc1 = one - state.beta1.powi(t);
    let bc2 = one - state.beta2.powi(t);
    let (b1, b2) = (state.beta1, state.beta2);
    let (lr, eps) = (state.lr, state.eps);
    for ((p, &g), (m, v)) in params
        .data_mut()
        .iter_mut()
        .zip(grads.data())
        .zip(
            state
                .first_moment
                .data_mut()
                .iter_mut()
                .zip(state.second_moment.data_mut()),
        )
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::from_fn(vec![4], |i| i as f32);
        let before = p.clone();
        let g = Tensor::zeros(vec![4]);
        let mut st = AdamState::new(&[4], &AdamConfig::default());
        adam_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // With g=1 the bias-corrected m_hat/sqrt(v_hat) is exactly 1, so the
        // step is lr/(1 + eps).
        let mut p = Tensor::scalar(0.0f64);
        let g = Tensor::scalar(1.0f64);
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut st = AdamState::new(&[], &cfg);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-8, "param {}", p.data()[0]);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = Tensor::scalar(1.0f64);
        let g = Tensor::scalar(0.5f64);
        let mut st = AdamState::new(&[], &AdamConfig::default());
        let mut last = p.data()[0];
        for _ in 0..25 {
            adam_step(&mut p, &g, &mut st).unwrap();
            assert!(p.data()[0] < last);
            last = p.data()[0];
        }
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let run = || {
            let mut p = Tensor::from_fn(vec![16], |i| (i as f64 * 0.77).sin());
            let g = Tensor::from_fn(vec![16], |i| (i as f64 * 0.31).cos());
            let mut st = AdamState::new(&[16], &AdamConfig::default());
            for _ in 0..10 {
                adam_step(&mut p, &g, &mut st).unwrap();
            }
            p.data().to_vec()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = Tensor::scalar(0.0f32);
        let g = Tensor::scalar(f32::NAN);
        let mut st = AdamState::new(&[], &AdamConfig::default());
        assert!(matches!(adam_step(&mut p, &g, &mut st), Err(Error::NonFinite { .. })));
    }
}

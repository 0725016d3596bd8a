use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Elementwise nonlinearity of a layer. The slope is kept as `f64` so the
/// same architecture config drives both f32 and f64 instantiations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f64 },
    Tanh,
}

impl Activation {
    pub fn leaky(slope: f64) -> Self {
        Activation::LeakyRelu { slope }
    }
}

pub fn activation_forward<S: Scalar>(input: &Tensor<S>, act: Activation) -> Tensor<S> {
    match act {
        Activation::Identity => input.clone(),
        Activation::LeakyRelu { slope } => {
            let a = S::from_f64_lossy(slope);
            input.clone().map(|x| if x > S::zero() { x } else { a * x })
        }
        Activation::Tanh => input.clone().map(|x| x.tanh()),
    }
}

/// `grad_out` scaled by the activation derivative at `input`. The leaky-ReLU
/// derivative at exactly zero is taken as the slope.
pub fn activation_backward<S: Scalar>(
    input: &Tensor<S>,
    act: Activation,
    grad_out: &Tensor<S>,
) -> Tensor<S> {
    debug_assert_eq!(input.shape(), grad_out.shape());
    match act {
        Activation::Identity => grad_out.clone(),
        Activation::LeakyRelu { slope } => {
            let a = S::from_f64_lossy(slope);
            let mut out = grad_out.clone();
            for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
                if x <= S::zero() {
                    *g *= a;
                }
            }
            out
        }
        Activation::Tanh => {
            let mut out = grad_out.clone();
            for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
                let t = x.tanh();
                *g *= S::one() - t * t;
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_scales_negatives() {
        let x = Tensor::from_vec(vec![3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        let y = activation_forward(&x, Activation::leaky(0.1));
        assert_eq!(y.data(), &[-0.1, 0.0, 2.0]);
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let x = Tensor::scalar(0.0f32);
        assert_eq!(activation_forward(&x, Activation::Tanh).data()[0], 0.0);
    }

    #[test]
    fn identity_passes_through() {
        let x = Tensor::from_fn(vec![4], |i| i as f64 - 1.5);
        let y = activation_forward(&x, Activation::Identity);
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn backward_applies_derivative() {
        let x = Tensor::from_vec(vec![2], vec![-2.0f64, 3.0]).unwrap();
        let g = Tensor::full(vec![2], 1.0f64);
        let gx = activation_backward(&x, Activation::leaky(0.25), &g);
        assert_eq!(gx.data(), &[0.25, 1.0]);

        let gt = activation_backward(&x, Activation::Tanh, &g);
        let want = 1.0 - (-2.0f64).tanh().powi(2);
        assert!((gt.data()[0] - want).abs() < 1e-15);
    }
}

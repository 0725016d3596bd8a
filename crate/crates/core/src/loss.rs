//! Mean absolute error, the training and validation loss of the whole
//! pipeline.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// MAE and its subgradient. `sign(0)` is taken as 0, so zero-residual
/// elements contribute nothing to the gradient.
pub fn mae_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mae operands",
            format!("{:?}", pred.shape()),
            format!("{:?}", target.shape()),
        ));
    }
    let count = S::from_usize_lossy(pred.len());
    let inv = count.recip();
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let mut acc = S::zero();
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        acc += d.abs();
        *g = if d > S::zero() {
            inv
        } else if d < S::zero() {
            -inv
        } else {
            S::zero()
        };
    }
    Ok((acc / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_tensors_have_zero_loss() {
        let a = Tensor::from_fn(vec![3, 4], |i| i as f32 * 0.5);
        let (loss, grad) = mae_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_offset_is_the_loss() {
        let a = Tensor::full(vec![2, 5], 1.0f64);
        let b = Tensor::full(vec![2, 5], 0.5f64);
        let (loss, grad) = mae_loss(&a, &b).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
        assert!(grad.iter().all(|&g| (g - 0.1).abs() < 1e-15));
    }

    #[test]
    fn matches_scalar_loop() {
        let p = Tensor::from_fn(vec![7, 3], |i| ((i * 31 + 7) % 13) as f64 * 0.21 - 1.0);
        let t = Tensor::from_fn(vec![7, 3], |i| ((i * 17 + 3) % 11) as f64 * 0.33 - 1.5);
        let (loss, _) = mae_loss(&p, &t).unwrap();
        let mut want = 0.0;
        for (a, b) in p.iter().zip(t.iter()) {
            want += (a - b).abs();
        }
        want /= 21.0;
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::<f32>::zeros(vec![2, 2]);
        let b = Tensor::<f32>::zeros(vec![4]);
        assert!(mae_loss(&a, &b).is_err());
    }
}

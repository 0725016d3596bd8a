//! Per-channel batch normalization over `(n, c, h, w)` inputs.
//!
//! Training mode normalizes by biased batch statistics and reports a running
//! update with `new = (1 - momentum) * old + momentum * batch` (unbiased
//! variance in the update), matching the convention of mainstream reference
//! checkpoints. The kernel never mutates shared state; the caller applies the
//! returned update.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<S: Scalar> {
    pub gamma: Tensor<S>,
    pub beta: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub epsilon: S,
    pub momentum: S,
}

impl<S: Scalar> BatchNormParams<S> {
    pub fn identity(c: usize) -> Self {
        BatchNormParams {
            gamma: Tensor::full(vec![c], S::one()),
            beta: Tensor::zeros(vec![c]),
            running_mean: Tensor::zeros(vec![c]),
            running_var: Tensor::full(vec![c], S::one()),
            epsilon: S::from_f64_lossy(1e-5),
            momentum: S::from_f64_lossy(0.1),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        for (name, t) in [
            ("beta", &self.beta),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ] {
            if t.len() != c {
                return Err(Error::shape(format!("batchnorm {name} length"), c, t.len()));
            }
        }
        if self.epsilon <= S::zero() {
            return Err(Error::InvalidConfig("batchnorm epsilon must be > 0".into()));
        }
        if self.momentum <= S::zero() || self.momentum >= S::one() {
            return Err(Error::InvalidConfig("batchnorm momentum must be in (0,1)".into()));
        }
        if self.running_var.iter().any(|&v| v < S::zero()) {
            return Err(Error::InvalidConfig("batchnorm running_var must be >= 0".into()));
        }
        Ok(())
    }
}

/// Batch statistics captured by a training-mode forward, needed by backward.
#[derive(Clone, Debug)]
pub struct BnCache<S: Scalar> {
    pub mean: Vec<S>,
    pub inv_std: Vec<S>,
}

/// Fresh running statistics produced by a training-mode forward.
#[derive(Clone, Debug)]
pub struct RunningUpdate<S: Scalar> {
    pub mean: Tensor<S>,
    pub var: Tensor<S>,
}

/// Training-mode byproducts of a batchnorm forward: batch statistics for
/// backward plus the refreshed running statistics for the caller to apply.
pub type BnTrainOut<S> = (BnCache<S>, RunningUpdate<S>);

fn check_channels<S: Scalar>(input: &Tensor<S>, params: &BatchNormParams<S>) -> Result<()> {
    if input.rank() != 4 {
        return Err(Error::shape("batchnorm input rank", 4, input.rank()));
    }
    if input.dim(1) != params.channels() {
        return Err(Error::shape("channel axis (axis 1)", params.channels(), input.dim(1)));
    }
    Ok(())
}

pub fn batchnorm_forward<S: Scalar>(
    input: &Tensor<S>,
    params: &BatchNormParams<S>,
    training: bool,
) -> Result<(Tensor<S>, Option<BnTrainOut<S>>)> {
    check_channels(input, params)?;
    let (n, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let hw = h * w;
    let mut out = Tensor::zeros(vec![n, c, h, w]);

    if !training {
        for ci in 0..c {
            let g = params.gamma.data()[ci];
            let b = params.beta.data()[ci];
            let inv = (params.running_var.data()[ci] + params.epsilon).sqrt().recip();
            let m = params.running_mean.data()[ci];
            for i in 0..n {
                let src = &input.data()[(i * c + ci) * hw..][..hw];
                let dst = &mut out.data_mut()[(i * c + ci) * hw..][..hw];
                for (d, &x) in dst.iter_mut().zip(src) {
                    *d = g * (x - m) * inv + b;
                }
            }
        }
        return Ok((out, None));
    }

    let m_count = n * hw;
    let m_s = S::from_usize_lossy(m_count);
    let mut mean = vec![S::zero(); c];
    let mut inv_std = vec![S::zero(); c];
    let mut upd_mean = Tensor::zeros(vec![c]);
    let mut upd_var = Tensor::zeros(vec![c]);

    for ci in 0..c {
        let mut sum = S::zero();
        for i in 0..n {
            for &x in &input.data()[(i * c + ci) * hw..][..hw] {
                sum += x;
            }
        }
        let mu = sum / m_s;
        let mut sq = S::zero();
        for i in 0..n {
            for &x in &input.data()[(i * c + ci) * hw..][..hw] {
                let d = x - mu;
                sq += d * d;
            }
        }
        let var = sq / m_s;
        let inv = (var + params.epsilon).sqrt().recip();
        mean[ci] = mu;
        inv_std[ci] = inv;

        let g = params.gamma.data()[ci];
        let b = params.beta.data()[ci];
        for i in 0..n {
            let src = &input.data()[(i * c + ci) * hw..][..hw];
            let dst = &mut out.data_mut()[(i * c + ci) * hw..][..hw];
            for (d, &x) in dst.iter_mut().zip(src) {
                *d = g * (x - mu) * inv + b;
            }
        }

        let one = S::one();
        let mom = params.momentum;
        let var_unbiased = if m_count > 1 {
            var * m_s / S::from_usize_lossy(m_count - 1)
        } else {
            var
        };
        upd_mean.data_mut()[ci] = (one - mom) * params.running_mean.data()[ci] + mom * mu;
        upd_var.data_mut()[ci] = (one - mom) * params.running_var.data()[ci] + mom * var_unbiased;
    }

    let cache = BnCache { mean, inv_std };
    let update = RunningUpdate { mean: upd_mean, var: upd_var };
    Ok((out, Some((cache, update))))
}

/// Gradients through batch normalization. Pass the training-mode cache when
/// the forward ran in training mode; `None` selects the eval-mode path that
/// treats running statistics as constants.
/// Gradient triple of batchnorm: `(grad_input, grad_gamma, grad_beta)`.
pub type BnGrads<S> = (Tensor<S>, Tensor<S>, Tensor<S>);

pub fn batchnorm_backward<S: Scalar>(
    input: &Tensor<S>,
    params: &BatchNormParams<S>,
    cache: Option<&BnCache<S>>,
    grad_out: &Tensor<S>,
) -> Result<BnGrads<S>> {
    check_channels(input, params)?;
    if grad_out.shape() != input.shape() {
        return Err(Error::shape(
            "grad_out shape",
            format!("{:?}", input.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let (n, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let hw = h * w;
    let m_s = S::from_usize_lossy(n * hw);

    let mut grad_input = Tensor::zeros(vec![n, c, h, w]);
    let mut grad_gamma = Tensor::zeros(vec![c]);
    let mut grad_beta = Tensor::zeros(vec![c]);

    for ci in 0..c {
        let (mu, inv) = match cache {
            Some(bc) => (bc.mean[ci], bc.inv_std[ci]),
            None => (
                params.running_mean.data()[ci],
                (params.running_var.data()[ci] + params.epsilon).sqrt().recip(),
            ),
        };
        let g = params.gamma.data()[ci];

        let mut sum_dy = S::zero();
        let mut sum_dy_xhat = S::zero();
        for i in 0..n {
            let xs = &input.data()[(i * c + ci) * hw..][..hw];
            let gs = &grad_out.data()[(i * c + ci) * hw..][..hw];
            for (&x, &dy) in xs.iter().zip(gs) {
                sum_dy += dy;
                sum_dy_xhat += dy * (x - mu) * inv;
            }
        }
        grad_beta.data_mut()[ci] = sum_dy;
        grad_gamma.data_mut()[ci] = sum_dy_xhat;

        match cache {
            Some(_) => {
                // dx = gamma*inv * (dy - mean(dy) - xhat*mean(dy*xhat))
                let mdy = sum_dy / m_s;
                let mdyx = sum_dy_xhat / m_s;
                for i in 0..n {
                    let xs = &input.data()[(i * c + ci) * hw..][..hw];
                    let gs = &grad_out.data()[(i * c + ci) * hw..][..hw];
                    let dst = &mut grad_input.data_mut()[(i * c + ci) * hw..][..hw];
                    for ((d, &x), &dy) in dst.iter_mut().zip(xs).zip(gs) {
                        let xhat = (x - mu) * inv;
                        *d = g * inv * (dy - mdy - xhat * mdyx);
                    }
                }
            }
            None => {
                let scale = g * inv;
                for i in 0..n {
                    let gs = &grad_out.data()[(i * c + ci) * hw..][..hw];
                    let dst = &mut grad_input.data_mut()[(i * c + ci) * hw..][..hw];
                    for (d, &dy) in dst.iter_mut().zip(gs) {
                        *d = scale * dy;
                    }
                }
            }
        }
    }
    Ok((grad_input, grad_gamma, grad_beta))
}

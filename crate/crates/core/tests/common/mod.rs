//! Shared oracles for the integration suites: naive direct-summation kernels,
//! independent metric formulas, and a central finite-difference utility.
//! Everything here is deliberately written without touching the production
//! kernel paths.

#![allow(dead_code)]

use fwiprune_core::ops::ConvParams;
use fwiprune_core::scalar::Scalar;
use fwiprune_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor<S: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<S> {
    Tensor::from_fn(shape.to_vec(), |_| S::from_f64_lossy(rng.random_range(-1.0..1.0)))
}

/// Direct 7-loop convolution, the independent oracle for `conv2d_forward`.
pub fn naive_conv2d<S: Scalar>(input: &Tensor<S>, params: &ConvParams<S>) -> Tensor<S> {
    let (n, c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (c_out, kh, kw) = (params.weights.dim(0), params.weights.dim(2), params.weights.dim(3));
    let (sh, sw) = params.stride;
    let (ph, pw) = params.padding;
    let oh = (h + 2 * ph - kh) / sh + 1;
    let ow = (w + 2 * pw - kw) / sw + 1;
    let mut out = Tensor::zeros(vec![n, c_out, oh, ow]);
    for ni in 0..n {
        for o in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = S::zero();
                    for i in 0..c_in {
                        for u in 0..kh {
                            for v in 0..kw {
                                let iy = (oy * sh + u) as isize - ph as isize;
                                let ix = (ox * sw + v) as isize - pw as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += input.at4(ni, i, iy as usize, ix as usize)
                                    * params.weights.at4(o, i, u, v);
                            }
                        }
                    }
                    if let Some(b) = &params.bias {
                        acc += b.data()[o];
                    }
                    let idx = ((ni * c_out + o) * oh + oy) * ow + ox;
                    out.data_mut()[idx] = acc;
                }
            }
        }
    }
    out
}

/// Direct transposed convolution by its scatter definition; the independent
/// oracle for `conv_transpose2d_forward`. Weights are `(c_in, c_out, kh, kw)`.
pub fn naive_conv_transpose2d<S: Scalar>(input: &Tensor<S>, params: &ConvParams<S>) -> Tensor<S> {
    let (n, c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (c_out, kh, kw) = (params.weights.dim(1), params.weights.dim(2), params.weights.dim(3));
    let (sh, sw) = params.stride;
    let (ph, pw) = params.padding;
    let oh = (h - 1) * sh + kh - 2 * ph;
    let ow = (w - 1) * sw + kw - 2 * pw;
    let mut out = Tensor::zeros(vec![n, c_out, oh, ow]);
    for ni in 0..n {
        for i in 0..c_in {
            for iy in 0..h {
                for ix in 0..w {
                    let x = input.at4(ni, i, iy, ix);
                    for o in 0..c_out {
                        for u in 0..kh {
                            for v in 0..kw {
                                let yy = (iy * sh + u) as isize - ph as isize;
                                let xx = (ix * sw + v) as isize - pw as isize;
                                if yy < 0 || xx < 0 || yy >= oh as isize || xx >= ow as isize {
                                    continue;
                                }
                                let idx = ((ni * c_out + o) * oh + yy as usize) * ow + xx as usize;
                                out.data_mut()[idx] += x * params.weights.at4(i, o, u, v);
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(b) = &params.bias {
        let hw = oh * ow;
        for ni in 0..n {
            for o in 0..c_out {
                let bv = b.data()[o];
                for vsl in &mut out.data_mut()[(ni * c_out + o) * hw..][..hw] {
                    *vsl += bv;
                }
            }
        }
    }
    out
}

pub fn max_abs_diff<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).abs())
        .fold(0.0, f64::max)
}

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_RTOL: f64 = 1e-4;
pub const GRAD_ATOL: f64 = 1e-8;

/// Central finite differences of a scalar function over a parameter vector.
pub fn finite_diff(f: &mut dyn FnMut(&[f64]) -> f64, theta: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + FD_STEP;
        let up = f(&work);
        work[i] = orig - FD_STEP;
        let down = f(&work);
        work[i] = orig;
        grad[i] = (up - down) / (2.0 * FD_STEP);
    }
    grad
}

/// Asserts `|a - f| <= rtol*max(|a|,|f|) + atol` elementwise, the gradient
/// agreement contract.
pub fn assert_grads_close(analytic: &[f64], fd: &[f64], what: &str) {
    assert_eq!(analytic.len(), fd.len(), "{what}: length mismatch");
    for (i, (&a, &f)) in analytic.iter().zip(fd).enumerate() {
        let tol = GRAD_RTOL * a.abs().max(f.abs()) + GRAD_ATOL;
        assert!(
            (a - f).abs() <= tol,
            "{what}: grad[{i}] analytic {a} vs finite-diff {f} (|diff| {} > {tol})",
            (a - f).abs()
        );
    }
}

/// Direct windowed SSIM: non-separable double loop straight from the
/// definition, the independent oracle for the production implementation.
#[allow(clippy::too_many_arguments)]
pub fn naive_ssim(x: &[f64], y: &[f64], h: usize, w: usize, window: usize, sigma: f64, c1: f64, c2: f64) -> f64 {
    let half = (window / 2) as f64;
    let s2 = 2.0 * sigma * sigma;
    let mut g = vec![0.0f64; window * window];
    let mut gsum = 0.0;
    for u in 0..window {
        for v in 0..window {
            let du = u as f64 - half;
            let dv = v as f64 - half;
            let val = (-(du * du + dv * dv) / s2).exp();
            g[u * window + v] = val;
            gsum += val;
        }
    }
    for v in &mut g {
        *v /= gsum;
    }
    let oh = h - window + 1;
    let ow = w - window + 1;
    let mut acc = 0.0;
    for oy in 0..oh {
        for ox in 0..ow {
            let (mut mx, mut my, mut exx, mut eyy, mut exy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for u in 0..window {
                for v in 0..window {
                    let wgt = g[u * window + v];
                    let xv = x[(oy + u) * w + ox + v];
                    let yv = y[(oy + u) * w + ox + v];
                    mx += wgt * xv;
                    my += wgt * yv;
                    exx += wgt * xv * xv;
                    eyy += wgt * yv * yv;
                    exy += wgt * xv * yv;
                }
            }
            let sx = exx - mx * mx;
            let sy = eyy - my * my;
            let sxy = exy - mx * my;
            acc += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2));
        }
    }
    acc / (oh * ow) as f64
}

//! Quality metrics between predicted and true velocity maps: MAE, RMSE and
//! SSIM (with the lower-is-better `1 - SSIM` convention for reporting).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub mae: f64,
    pub rmse: f64,
    pub ssim: f64,
}

/// SSIM windowing parameters. Defaults follow the common convention: an
/// 11x11 Gaussian window with sigma 1.5, k1/k2 = 0.01/0.03, and a data range
/// of 2.0 for maps normalized into [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, data_range: 2.0 }
    }
}

impl SsimConfig {
    fn kernel(&self) -> Vec<f64> {
        let n = self.window;
        let half = (n / 2) as f64;
        let s2 = 2.0 * self.sigma * self.sigma;
        let mut g: Vec<f64> = (0..n).map(|i| (-((i as f64 - half).powi(2)) / s2).exp()).collect();
        let sum: f64 = g.iter().sum();
        for v in &mut g {
            *v /= sum;
        }
        g
    }
}

/// MAE, RMSE and mean SSIM over a pair of equally-shaped tensors. The last
/// two axes are treated as the image plane; all leading axes are independent
/// images averaged together.
pub fn metrics<S: Scalar>(pred: &Tensor<S>, truth: &Tensor<S>) -> Result<MetricTriple> {
    metrics_with(pred, truth, &SsimConfig::default())
}

pub fn metrics_with<S: Scalar>(
    pred: &Tensor<S>,
    truth: &Tensor<S>,
    cfg: &SsimConfig,
) -> Result<MetricTriple> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(
            "metric operands",
            format!("{:?}", pred.shape()),
            format!("{:?}", truth.shape()),
        ));
    }
    if pred.rank() < 2 {
        return Err(Error::shape("metric operand rank", ">= 2", pred.rank()));
    }
    let h = pred.dim(pred.rank() - 2);
    let w = pred.dim(pred.rank() - 1);
    if h < cfg.window || w < cfg.window {
        return Err(Error::InvalidGeometry(format!(
            "image {h}x{w} smaller than the {0}x{0} SSIM window",
            cfg.window
        )));
    }

    let mut abs_sum = 0.0f64;
    let mut sq_sum = 0.0f64;
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        let d = p.to_f64_lossy() - t.to_f64_lossy();
        abs_sum += d.abs();
        sq_sum += d * d;
    }
    let count = pred.len() as f64;
    let mae = abs_sum / count;
    let rmse = (sq_sum / count).sqrt();

    let images = pred.len() / (h * w);
    let kernel = cfg.kernel();
    let c1 = (cfg.k1 * cfg.data_range).powi(2);
    let c2 = (cfg.k2 * cfg.data_range).powi(2);
    let mut ssim_sum = 0.0f64;
    let mut windows = 0usize;
    for img in 0..images {
        let off = img * h * w;
        let x: Vec<f64> = pred.data()[off..off + h * w].iter().map(|v| v.to_f64_lossy()).collect();
        let y: Vec<f64> = truth.data()[off..off + h * w].iter().map(|v| v.to_f64_lossy()).collect();
        ssim_sum += ssim_image(&x, &y, h, w, &kernel, c1, c2, &mut windows);
    }
    let ssim = ssim_sum / windows as f64;
    Ok(MetricTriple { mae, rmse, ssim })
}

/// Lower-is-better transform so all three reported metrics point the same
/// way.
pub fn one_minus_ssim(triple: &MetricTriple) -> f64 {
    1.0 - triple.ssim
}

/// Valid-window separable Gaussian blur of one field.
fn blur(field: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let win = kernel.len();
    let ow = w - win + 1;
    let oh = h - win + 1;
    let mut tmp = vec![0.0f64; h * ow];
    for y in 0..h {
        let row = &field[y * w..(y + 1) * w];
        let dst = &mut tmp[y * ow..(y + 1) * ow];
        for (ox, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (v, &g) in kernel.iter().enumerate() {
                acc += g * row[ox + v];
            }
            *d = acc;
        }
    }
    let mut out = vec![0.0f64; oh * ow];
    for oy in 0..oh {
        let dst = &mut out[oy * ow..(oy + 1) * ow];
        for (u, &g) in kernel.iter().enumerate() {
            let src = &tmp[(oy + u) * ow..(oy + u + 1) * ow];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += g * s;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn ssim_image(
    x: &[f64],
    y: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64],
    c1: f64,
    c2: f64,
    windows: &mut usize,
) -> f64 {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mu_x = blur(x, h, w, kernel);
    let mu_y = blur(y, h, w, kernel);
    let e_xx = blur(&xx, h, w, kernel);
    let e_yy = blur(&yy, h, w, kernel);
    let e_xy = blur(&xy, h, w, kernel);

    let mut acc = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sx = e_xx[i] - mx * mx;
        let sy = e_yy[i] - my * my;
        let sxy = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
        let den = (mx * mx + my * my + c1) * (sx + sy + c2);
        acc += num / den;
    }
    *windows += mu_x.len();
    acc
}

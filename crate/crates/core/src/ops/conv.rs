//! 2-D convolution (cross-correlation convention, zero padding) via im2col
//! and the fixed-order matmul in `linalg`.

use crate::error::{Error, Result};
use crate::linalg::{matmul_acc, transpose};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Weights plus geometry for a convolution or transposed convolution.
///
/// Convolution stores weights as `(c_out, c_in, k_h, k_w)`; transposed
/// convolution stores them as `(c_in, c_out, k_h, k_w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<S: Scalar> {
    pub weights: Tensor<S>,
    pub bias: Option<Tensor<S>>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl<S: Scalar> ConvParams<S> {
    pub fn new(
        weights: Tensor<S>,
        bias: Option<Tensor<S>>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        if weights.rank() != 4 {
            return Err(Error::shape("conv weights rank", 4, weights.rank()));
        }
        if stride.0 < 1 || stride.1 < 1 {
            return Err(Error::InvalidGeometry(format!("stride must be >= 1, got {stride:?}")));
        }
        Ok(ConvParams { weights, bias, stride, padding })
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.dim(2), self.weights.dim(3))
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geom {
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
}

impl Geom {
    pub(crate) fn of<S: Scalar>(p: &ConvParams<S>) -> Geom {
        Geom {
            kh: p.weights.dim(2),
            kw: p.weights.dim(3),
            sh: p.stride.0,
            sw: p.stride.1,
            ph: p.padding.0,
            pw: p.padding.1,
        }
    }

    /// Output extents of a forward convolution over an `(h, w)` map.
    pub(crate) fn conv_out(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if h + 2 * self.ph < self.kh {
            return Err(Error::InvalidGeometry(format!(
                "height {h} + 2*{} smaller than kernel height {}",
                self.ph, self.kh
            )));
        }
        if w + 2 * self.pw < self.kw {
            return Err(Error::InvalidGeometry(format!(
                "width {w} + 2*{} smaller than kernel width {}",
                self.pw, self.kw
            )));
        }
        Ok((
            (h + 2 * self.ph - self.kh) / self.sh + 1,
            (w + 2 * self.pw - self.kw) / self.sw + 1,
        ))
    }

    /// Output extents of a transposed convolution over an `(h, w)` map.
    pub(crate) fn deconv_out(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = ((h - 1) * self.sh + self.kh) as isize - 2 * self.ph as isize;
        let ow = ((w - 1) * self.sw + self.kw) as isize - 2 * self.pw as isize;
        if oh < 1 || ow < 1 {
            return Err(Error::InvalidGeometry(format!(
                "transposed conv output extent {oh}x{ow} < 1 for input {h}x{w}, \
                 kernel {}x{}, stride {:?}, padding {:?}",
                self.kh,
                self.kw,
                (self.sh, self.sw),
                (self.ph, self.pw)
            )));
        }
        Ok((oh as usize, ow as usize))
    }
}

/// Gradient triple of a convolution: `(grad_input, grad_weights, grad_bias)`.
pub type ConvGrads<S> = (Tensor<S>, Tensor<S>, Option<Tensor<S>>);

/// Lower one `(c, h, w)` item into a `(c*kh*kw) x (oh*ow)` patch matrix.
/// Out-of-bounds taps read as zero (zero padding).
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col<S: Scalar>(
    x: &[S],
    c: usize,
    h: usize,
    w: usize,
    g: Geom,
    oh: usize,
    ow: usize,
    col: &mut [S],
) {
    let p = oh * ow;
    debug_assert_eq!(col.len(), c * g.kh * g.kw * p);
    for ci in 0..c {
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = &mut col[((ci * g.kh + u) * g.kw + v) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * g.sh + u) as isize - g.ph as isize;
                    let dst = &mut row[oy * ow..][..ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(S::zero());
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..][..w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.sw + v) as isize - g.pw as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            S::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: scatter-add a patch matrix back onto a `(c, h, w)`
/// item. Taps that fell in the padding are dropped.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im_acc<S: Scalar>(
    col: &[S],
    c: usize,
    h: usize,
    w: usize,
    g: Geom,
    oh: usize,
    ow: usize,
    x: &mut [S],
) {
    let p = oh * ow;
    debug_assert_eq!(col.len(), c * g.kh * g.kw * p);
    debug_assert_eq!(x.len(), c * h * w);
    for ci in 0..c {
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = &col[((ci * g.kh + u) * g.kw + v) * p..][..p];
                for oy in 0..oh {
                    let iy = (oy * g.sh + u) as isize - g.ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut x[(ci * h + iy as usize) * w..][..w];
                    let src = &row[oy * ow..][..ow];
                    for (ox, s) in src.iter().enumerate() {
                        let ix = (ox * g.sw + v) as isize - g.pw as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += *s;
                        }
                    }
                }
            }
        }
    }
}

fn check_input<S: Scalar>(input: &Tensor<S>, params: &ConvParams<S>, c_axis: usize) -> Result<()> {
    if input.rank() != 4 {
        return Err(Error::shape("conv input rank", 4, input.rank()));
    }
    let want = params.weights.dim(c_axis);
    if input.dim(1) != want {
        return Err(Error::shape("input channel axis (axis 1)", want, input.dim(1)));
    }
    Ok(())
}

/// Forward convolution of `(n, c_in, h, w)` with weights `(c_out, c_in, k_h, k_w)`.
pub fn conv2d_forward<S: Scalar>(input: &Tensor<S>, params: &ConvParams<S>) -> Result<Tensor<S>> {
    check_input(input, params, 1)?;
    let (n, c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let c_out = params.weights.dim(0);
    if let Some(b) = &params.bias {
        if b.len() != c_out {
            return Err(Error::shape("bias length (output channel axis)", c_out, b.len()));
        }
    }
    let g = Geom::of(params);
    let (oh, ow) = g.conv_out(h, w)?;
    let p = oh * ow;
    let k = c_in * g.kh * g.kw;

    let mut out = Tensor::zeros(vec![n, c_out, oh, ow]);
    let mut col = vec![S::zero(); k * p];
    for i in 0..n {
        im2col(&input.data()[i * c_in * h * w..][..c_in * h * w], c_in, h, w, g, oh, ow, &mut col);
        let out_item = &mut out.data_mut()[i * c_out * p..][..c_out * p];
        matmul_acc(c_out, k, p, params.weights.data(), &col, out_item);
        if let Some(b) = &params.bias {
            for o in 0..c_out {
                let bv = b.data()[o];
                for v in &mut out_item[o * p..(o + 1) * p] {
                    *v += bv;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a forward convolution. Returns `(grad_input, grad_weights,
/// grad_bias)`; `grad_bias` is `None` when the layer has no bias.
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    params: &ConvParams<S>,
    grad_out: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    check_input(input, params, 1)?;
    let (n, c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let c_out = params.weights.dim(0);
    let g = Geom::of(params);
    let (oh, ow) = g.conv_out(h, w)?;
    let expect = [n, c_out, oh, ow];
    if grad_out.shape() != expect {
        return Err(Error::shape("grad_out shape", format!("{expect:?}"), format!("{:?}", grad_out.shape())));
    }
    let p = oh * ow;
    let k = c_in * g.kh * g.kw;

    let mut grad_input = Tensor::zeros(vec![n, c_in, h, w]);
    let mut grad_w = Tensor::zeros(params.weights.shape().to_vec());
    let mut grad_b = params.bias.as_ref().map(|_| Tensor::zeros(vec![c_out]));

    // dL/dW = sum_i g_i . col_i^T ; dL/dx_i = col2im(W^T . g_i)
    let mut col = vec![S::zero(); k * p];
    let mut col_t = vec![S::zero(); k * p];
    let mut dcol = vec![S::zero(); k * p];
    let mut w_t = vec![S::zero(); k * c_out];
    transpose(c_out, k, params.weights.data(), &mut w_t);

    for i in 0..n {
        let x_item = &input.data()[i * c_in * h * w..][..c_in * h * w];
        let g_item = &grad_out.data()[i * c_out * p..][..c_out * p];

        im2col(x_item, c_in, h, w, g, oh, ow, &mut col);
        transpose(k, p, &col, &mut col_t);
        matmul_acc(c_out, p, k, g_item, &col_t, grad_w.data_mut());

        dcol.fill(S::zero());
        matmul_acc(k, c_out, p, &w_t, g_item, &mut dcol);
        let gx_item = &mut grad_input.data_mut()[i * c_in * h * w..][..c_in * h * w];
        col2im_acc(&dcol, c_in, h, w, g, oh, ow, gx_item);

        if let Some(gb) = &mut grad_b {
            for o in 0..c_out {
                let mut acc = S::zero();
                for v in &g_item[o * p..(o + 1) * p] {
                    acc += *v;
                }
                gb.data_mut()[o] += acc;
            }
        }
    }
    Ok((grad_input, grad_w, grad_b))
}

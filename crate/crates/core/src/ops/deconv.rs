//! Transposed convolution: the adjoint of `conv2d` under matched geometry.
//! Weights are stored `(c_in, c_out, k_h, k_w)`.

use crate::error::{Error, Result};
use crate::linalg::{matmul_acc, transpose};
use crate::ops::conv::{col2im_acc, im2col, ConvGrads, ConvParams, Geom};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_input<S: Scalar>(input: &Tensor<S>, params: &ConvParams<S>) -> Result<()> {
    if input.rank() != 4 {
        return Err(Error::shape("transposed conv input rank", 4, input.rank()));
    }
    let want = params.weights.dim(0);
    if input.dim(1) != want {
        return Err(Error::shape("input channel axis (weights axis 0)", want, input.dim(1)));
    }
    if let Some(b) = &params.bias {
        let c_out = params.weights.dim(1);
        if b.len() != c_out {
            return Err(Error::shape("bias length (weights axis 1)", c_out, b.len()));
        }
    }
    Ok(())
}

/// Forward transposed convolution of `(n, c_in, h, w)`; output extents are
/// `(h-1)*s - 2p + k` per axis and must come out >= 1.
pub fn conv_transpose2d_forward<S: Scalar>(
    input: &Tensor<S>,
    params: &ConvParams<S>,
) -> Result<Tensor<S>> {
    check_input(input, params)?;
    let (n, c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let c_out = params.weights.dim(1);
    let g = Geom::of(params);
    let (oh, ow) = g.deconv_out(h, w)?;
    let p = h * w; // patch positions live on the *input* grid
    let k = c_out * g.kh * g.kw;

    // Scatter W^T . x_i onto the output grid; this is exactly the grad-input
    // path of a conv whose input has the output's extents.
    let mut w_t = vec![S::zero(); c_in * k];
    transpose(c_in, k, params.weights.data(), &mut w_t);

    let mut out = Tensor::zeros(vec![n, c_out, oh, ow]);
    let mut dcol = vec![S::zero(); k * p];
    for i in 0..n {
        let x_item = &input.data()[i * c_in * p..][..c_in * p];
        dcol.fill(S::zero());
        matmul_acc(k, c_in, p, &w_t, x_item, &mut dcol);
        let out_item = &mut out.data_mut()[i * c_out * oh * ow..][..c_out * oh * ow];
        col2im_acc(&dcol, c_out, oh, ow, g, h, w, out_item);
        if let Some(b) = &params.bias {
            for o in 0..c_out {
                let bv = b.data()[o];
                for v in &mut out_item[o * oh * ow..(o + 1) * oh * ow] {
                    *v += bv;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a transposed convolution; mirror image of `conv2d_backward`.
pub fn conv_transpose2d_backward<S: Scalar>(
    input: &Tensor<S>,
    params: &ConvParams<S>,
    grad_out: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    check_input(input, params)?;
    let (n, c_in, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let c_out = params.weights.dim(1);
    let g = Geom::of(params);
    let (oh, ow) = g.deconv_out(h, w)?;
    let expect = [n, c_out, oh, ow];
    if grad_out.shape() != expect {
        return Err(Error::shape("grad_out shape", format!("{expect:?}"), format!("{:?}", grad_out.shape())));
    }
    let p = h * w;
    let k = c_out * g.kh * g.kw;
    let op = oh * ow;

    let mut grad_input = Tensor::zeros(vec![n, c_in, h, w]);
    let mut grad_w = Tensor::zeros(params.weights.shape().to_vec());
    let mut grad_b = params.bias.as_ref().map(|_| Tensor::zeros(vec![c_out]));

    // dL/dx_i = W . im2col(g_i) ; dL/dW += x_i . im2col(g_i)^T
    let mut col = vec![S::zero(); k * p];
    let mut col_t = vec![S::zero(); k * p];
    for i in 0..n {
        let x_item = &input.data()[i * c_in * p..][..c_in * p];
        let g_item = &grad_out.data()[i * c_out * op..][..c_out * op];

        im2col(g_item, c_out, oh, ow, g, h, w, &mut col);
        let gx_item = &mut grad_input.data_mut()[i * c_in * p..][..c_in * p];
        matmul_acc(c_in, k, p, params.weights.data(), &col, gx_item);

        transpose(k, p, &col, &mut col_t);
        matmul_acc(c_in, p, k, x_item, &col_t, grad_w.data_mut());

        if let Some(gb) = &mut grad_b {
            for o in 0..c_out {
                let mut acc = S::zero();
                for v in &g_item[o * op..(o + 1) * op] {
                    acc += *v;
                }
                gb.data_mut()[o] += acc;
            }
        }
    }
    Ok((grad_input, grad_w, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tap_broadcasts_kernel() {
        // A 1x1 input of value v against a 2x2 ones kernel paints a 2x2
        // output of v everywhere.
        let v = 3.5f32;
        let x = Tensor::from_vec(vec![1, 1, 1, 1], vec![v]).unwrap();
        let w = Tensor::full(vec![1, 1, 2, 2], 1.0f32);
        let p = ConvParams::new(w, None, (1, 1), (0, 0)).unwrap();
        let out = conv_transpose2d_forward(&x, &p).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert!(out.iter().all(|&o| o == v));
    }

    #[test]
    fn zero_kernel_zero_output() {
        let x = Tensor::from_fn(vec![1, 2, 3, 3], |i| i as f32);
        let w = Tensor::zeros(vec![2, 3, 4, 4]);
        let p = ConvParams::new(w, Some(Tensor::zeros(vec![3])), (2, 2), (1, 1)).unwrap();
        let out = conv_transpose2d_forward(&x, &p).unwrap();
        assert!(out.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn degenerate_output_extent_rejected() {
        // (1-1)*1 - 2*1 + 1 = -1 < 1
        let x = Tensor::<f32>::zeros(vec![1, 1, 1, 1]);
        let w = Tensor::zeros(vec![1, 1, 1, 1]);
        let p = ConvParams::new(w, None, (1, 1), (1, 1)).unwrap();
        assert!(matches!(
            conv_transpose2d_forward(&x, &p),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn stride_two_output_extents() {
        let x = Tensor::<f32>::zeros(vec![1, 4, 5, 5]);
        let w = Tensor::zeros(vec![4, 2, 4, 4]);
        let p = ConvParams::new(w, None, (2, 2), (1, 1)).unwrap();
        let out = conv_transpose2d_forward(&x, &p).unwrap();
        assert_eq!(out.shape(), &[1, 2, 10, 10]);
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let x = Tensor::from_fn(vec![2, 3, 4, 4], |i| (i as f32 * 0.3).sin());
        let w = Tensor::from_fn(vec![3, 2, 3, 3], |i| (i as f32 * 0.7).cos());
        let p = ConvParams::new(w, Some(Tensor::zeros(vec![2])), (2, 2), (1, 1)).unwrap();
        let out = conv_transpose2d_forward(&x, &p).unwrap();
        let g = Tensor::zeros(out.shape().to_vec());
        let (gx, gw, gb) = conv_transpose2d_backward(&x, &p, &g).unwrap();
        assert!(gx.iter().all(|&v| v == 0.0));
        assert!(gw.iter().all(|&v| v == 0.0));
        assert!(gb.unwrap().iter().all(|&v| v == 0.0));
    }
}

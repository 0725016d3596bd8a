//! Layer kernels: convolution, transposed convolution, batch normalization
//! and elementwise activations, each with a hand-written backward pass.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod deconv;

pub use activation::{activation_backward, activation_forward, Activation};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormParams, BnCache, RunningUpdate};
pub use conv::{conv2d_backward, conv2d_forward, ConvParams};
pub use deconv::{conv_transpose2d_backward, conv_transpose2d_forward};

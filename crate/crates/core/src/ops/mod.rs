//! Forward and input-gradient kernels.

mod activation;
mod conv;
mod linear;
mod pool;
mod resample;

pub use activation::{activation_backward, activation_forward, Activation};
pub use conv::{
    conv2d_backward_input, conv2d_forward, conv_transpose2d_backward_input, conv_transpose2d_forward, ConvSpec,
};
pub use linear::{linear_backward_input, linear_forward};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, ArgmaxMap};
pub use resample::{downsample2x, resample, resize_bilinear, upsample2x, Resample};

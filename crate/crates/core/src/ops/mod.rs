//! Differentiable numerical kernels. Each operation is a pure function with
//! an explicit backward companion; the autodiff graph composes them.

pub mod activation;
pub mod conv;
pub mod norm;
pub mod resample;
pub mod shuffle;

pub use activation::{relu, relu_backward, softmax_axis, softmax_backward};
pub use conv::{conv2d, conv2d_backward, conv3d, conv3d_backward, ConvSpec};
pub use norm::{
    batchnorm, batchnorm_backward_eval, batchnorm_backward_train, channel_stats, BatchNormState,
    BnMode, BN_EPSILON, BN_MOMENTUM,
};
pub use resample::{
    bicubic_resize, bicubic_resize_backward, gaussian_blur, gaussian_blur_backward, gaussian_kernel,
    keys_cubic,
};
pub use shuffle::{pixel_shuffle, pixel_shuffle_backward};

//! Dense tensors and the handful of differentiable layers the detector needs.
//!
//! Every layer exposes a pure functional form (`*_forward` / `*_backward`) and a
//! batched struct that caches what its backward pass needs. Layers are generic
//! over [`Scalar`] so gradient checks can run in `f64`.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod param;
pub mod pool;
pub mod rng;
pub mod tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, Relu};
pub use batchnorm::{
    batchnorm2d_backward, batchnorm2d_infer, batchnorm2d_train, BatchNorm2d, BatchNormCache,
    BN_EPSILON, BN_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, Conv2dGrads, Padding};
pub use dense::{dense_backward, dense_forward, Dense};
pub use param::{glorot_limit, glorot_uniform, Param};
pub use pool::{maxpool2d_backward, maxpool2d_forward, MaxPool2d};
pub use rng::{derive_seed, Rng};
pub use tensor::{Scalar, Tensor};

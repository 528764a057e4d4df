//! A small differentiable network engine: tensors, layers, softmax
//! cross-entropy, Adam, He initialization and finite-difference checks.
//!
//! Networks are fixed layer stacks ([`Sequential`]) rather than a general
//! autograd graph. All arithmetic is generic over [`Real`] so the same code
//! trains in `f32` and is verified in `f64`.

pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use gradcheck::{gradient_check, Differentiable, GradCheckOptions, GradCheckReport};
pub use init::{he_init, init_params};
pub use layers::{Layer, LayerSpec, Mode, Sequential};
pub use loss::{softmax, softmax_cross_entropy};
pub use optim::Adam;
pub use tensor::{Parameter, Real, Tensor};

//! Differentiable operators and the optimizer used to train the embedder.
//!
//! Every operator is a pair of free functions: a forward pass and an explicit
//! backward pass taking whatever the forward pass saved. There is no tape.

mod batchnorm;
mod conv;
mod dense;
mod gradcheck;
mod loss;
mod pool;
mod sgd;
mod tensor;

pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, batchnorm_train, BatchNormState,
    BnCache, BnGrads, Mode, BN_EPS, BN_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, Conv2dGrads};
pub use dense::{
    abs_diff, abs_diff_backward, dense_backward, dense_forward, relu, relu_backward, sigmoid,
    sigmoid_backward, sigmoid_scalar, DenseGrads,
};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use loss::{
    bce_backward, bce_loss, clamp_prob, sigmoid_bce, softmax_cross_entropy, PROB_CLAMP,
};
pub use pool::{maxpool2_backward, maxpool2_forward};
pub use sgd::{sgd_step, SgdState};
pub use tensor::Tensor;

pub(crate) use dense::sign;

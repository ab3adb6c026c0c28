//! One-hidden-layer perceptron with analytic gradients, categorical helpers
//! and Adam.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod mlp;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use gradcheck::{finite_difference_check, finite_difference_check_with, relative_error, BackwardFn, LossFn};
pub use mlp::{
    backward, backward_into, entropy, forward, forward_cached, log_softmax, softmax, Activation, ForwardCache,
    Grads, MlpParams,
};

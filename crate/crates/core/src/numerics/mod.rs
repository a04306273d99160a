//! Differentiable compute core: tensors, a reverse-mode tape, MLPs,
//! a 3×3 SVD and a finite-difference gradient checker.

mod gradcheck;
mod mlp;
mod params;
mod svd;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use mlp::{mlp_forward, mlp_on_tape, register_mlp, Activation, Linear, MlpParams};
pub use params::ParamStore;
pub use svd::{svd3, Svd3};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{log_softmax, matmul, matmul_nt, matmul_tn, softmax, Tensor};

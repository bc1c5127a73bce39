//! Dense tensors with a reverse-mode tape, the layers the network needs, ADAM,
//! and a central-difference gradient checker.

mod graph;
mod gradcheck;
mod init;
mod nn;
mod optim;
mod scalar;
#[allow(clippy::module_inception)]
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use init::{kaiming_uniform, zeros_bias};
pub use nn::{Activation, AttPool, Dense, ParamSet};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use scalar::Scalar;
pub use tensor::{Parameter, Tensor};

/// Negative-side slope used by every LeakyReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.2;

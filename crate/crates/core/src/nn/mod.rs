//! Dense numerical kernel: affine layers, a recurrent cell, masked softmax,
//! optimizers and a finite-difference oracle.

mod dense;
pub mod gradcheck;
mod lstm;
mod optim;
mod params;
mod softmax;

pub use dense::DenseLayer;
pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use lstm::{LstmCache, LstmCell, LstmState};
pub use optim::{sgd_step, AdamW, Optimizer, OptimizerKind};
pub use params::{clip_grad_norm, Parameterized};
pub use softmax::{log_sum_exp, masked_softmax};

//! Reward-trained evidence sentence selection for cross-document relation
//! extraction.

pub mod baselines;
mod bytes;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod rehead;
pub mod rltrain;
pub mod rng;
pub mod selector;

pub use error::{ReicError, Result};

//! Hybrid finite-element / neural-network surrogates trained on the discrete
//! residual `K u - F` instead of precomputed solutions.

pub mod error;
pub mod fem;
pub mod inverse;
pub mod forward;
pub mod linalg;
pub mod neural;
pub mod problems;
pub mod rng;
pub mod uq;

pub use error::{Error, Result};

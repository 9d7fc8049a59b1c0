//! Signature-based distribution regression on stochastic processes.
//!
//! The crate provides the full numerical stack: discrete paths and their
//! transforms, truncated signatures, signature kernels via the Goursat PDE,
//! unbiased 1st/2nd-order MMD estimators, SDE and particle simulators, a
//! from-scratch MLP with AdamW, the expected-signature MMD approximator, and
//! the SPEEDRS reference-set regression pipeline.

pub mod approx;
pub mod error;
pub mod mmd;
pub mod neural;
pub mod path;
pub mod pipeline;
pub mod rng;
pub mod sde;
pub mod sig;
pub mod sigkernel;

pub use error::{Error, Result};
pub use path::{Path, PathBundle};

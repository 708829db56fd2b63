//! Episodic constrained policy optimization.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//! exact finite-horizon CMDP evaluation, brute-force reference solvers,
//! parameterized policies with exact gradients, the damped ReLU-penalty loss
//! stack with its multiplier and damping updates, the training loop, two
//! comparison baselines, and small episodic environments.
//!
//! IO, configuration files and the command line live in the `ecop` crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod approx;
pub mod baselines;
pub mod cmdp;
pub mod ecop;
pub mod envs;
pub mod error;
pub mod math;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

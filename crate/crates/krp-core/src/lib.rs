//! # krp-core
//!
//! Pooling of temporally ordered multivariate sequences into compact
//! descriptors, built around three ideas:
//!
//! 1. **Linear rank pooling** ([`linrank`]): the pooled descriptor is the
//!    parameter vector of a line whose projections of the frames preserve
//!    temporal order (a ranking-SVM objective).
//! 2. **Kernelized rank pooling** ([`preimage`]): the descriptor is the
//!    pre-image `z` of an RKHS direction `Φ(z)`; projections
//!    `k(x_i, z)` of the frames onto it must increase with time.
//! 3. **Order-constrained kernel subspaces** ([`krpfs`]): the descriptor is
//!    an `n×p` coefficient matrix `A` parameterizing a `p`-dimensional
//!    subspace of the RKHS with `AᵀKA = I`, chosen so that the projection
//!    energy of the frames into the subspace grows with time. The
//!    constraint set is a generalized Stiefel/Grassmann manifold;
//!    [`geometry`] provides the Riemannian machinery and a
//!    conjugate-gradient solver.
//!
//! Descriptors are compared with an RBF kernel (pre-images) or the
//! exponential projection metric kernel (subspaces) in [`grasskernel`],
//! and classified with a one-vs-rest kernel ridge model in [`classify`].
//!
//! The crate is `no_std`-compatible (requires `alloc`): build with
//! `--no-default-features --features libm`. All file formats and the CLI
//! live in the companion `krp` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("krp-core needs either the `std` or the `libm` feature");

pub mod classify;
pub mod error;
pub mod geometry;
pub mod grasskernel;
pub mod kernel;
pub mod krpfs;
pub mod linrank;
pub mod preimage;
pub mod rng;
mod scalar;
pub mod seq;

pub use error::{Error, Result};

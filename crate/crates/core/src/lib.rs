//! Simulation and analysis of the NOON-state projection measurement of
//! multi-photon temporal distinguishability.
//!
//! - [`fock`]: single-mode Fock algebra for the N-arm projector.
//! - [`temporal`]: permutation-pair sums for partially distinguishable photons.
//! - [`source`]: the two-crystal down-conversion experiment with pair jitter.
//! - [`analysis`]: dip fits, closed-form visibilities and E/A inference.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod analysis;
pub mod error;
pub mod fock;
pub mod source;
pub mod temporal;

pub use error::{Error, Result};
pub use num_complex::Complex64;

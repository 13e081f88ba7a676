// SPDX-License-Identifier: Apache-2.0

//! Stochastic operator variance (SOV), dissipative out-of-time-order
//! correlators and Lyapunov exponents for spin systems under Hermitian
//! dephasing noise, plus the matching classical stochastic dynamics.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod otoc;
pub mod sov;
pub mod spin_algebra;
pub mod superop;
pub mod trajectories;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Result, SovError};

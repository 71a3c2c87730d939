//! Endogenous random averaging dynamics.
//!
//! This crate simulates recursions of the form `x(k+1) = W(k+1) x(k)` where
//! each `W(k+1)` is a random row-stochastic matrix whose law may depend on the
//! whole history of the process. It provides:
//!
//! * [`linalg`]: validated stochastic matrices, subset flows, orderings and the
//!   geometric `V_ℓ` functional.
//! * [`models`]: Hegselmann-Krause variants (synchronous, asynchronous,
//!   link failure, random confidence) and endogenous asymmetric gossip, all
//!   behind the [`ProcessModel`] contract.
//! * [`engine`]: seeded trajectory simulation, snapshots, and one-step
//!   resampling that realizes conditional expectations by Monte-Carlo.
//! * [`diagnostics`]: statistical certificates for balancedness,
//!   sub-symmetry, weak reciprocity, submartingale / supermartingale
//!   behaviour, absolute probability processes and infinite-flow clustering.
//!
//! The crate is `no_std` + `alloc` by default. The `std` feature is a marker
//! for hosted builds and `parallel` fans replicas and resample batches out
//! over rayon. Results never depend on thread count: every random stream is
//! derived from a labelled seed and aggregation runs in index order.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(a >= b)` is how NaN inputs are rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod diagnostics;
pub mod engine;
mod error;
pub mod linalg;
mod math;
pub mod models;
mod par;
pub mod stats;

pub use engine::{RandomStream, SeedSpec, Snapshot, Trajectory};
pub use error::{Error, Result};
pub use linalg::{Ordering, StateVector, StochasticMatrix, SubsetMask};
pub use models::{AnyModel, ProcessModel};

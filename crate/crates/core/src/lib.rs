//! Simulation and verification toolkit for interacting SDEs on ℤ with
//! multiplicative noise and superlinear drift.

// `!(x > 0.0)` rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drift;
pub mod error;
pub mod expr;
pub mod harness;
pub mod kernel;
pub mod lattice;
pub mod moments;
pub mod noise;
pub mod picard;
pub mod sde1d;
pub mod splitting;
pub mod stats;

pub use drift::{DriftSpec, GrowthConstants};
pub use error::{Error, Result};
pub use kernel::{KernelSlice, WalkSpec};
pub use lattice::{Boundary, InitialProfile, LatticeState, Window};
pub use noise::NoiseField;
pub use stats::McEstimate;

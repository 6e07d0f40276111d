//! Carleman-weighted reconstruction of the interior and boundary potentials
//! of a one-dimensional Schrödinger equation with a dynamic boundary
//! condition from a single flux measurement.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod carleman;
pub mod cbrec;
pub mod config;
pub mod error;
pub mod extension;
pub mod forward;
pub mod functional;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod manufactured;
pub mod stability;
pub mod weights;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use grid::{Grid1D, Potentials, TimeWindow, Trajectory};

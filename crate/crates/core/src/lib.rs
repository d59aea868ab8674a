//! Dyadic harmonic analysis on the discretized torus.
//!
//! Random dyadic lattices, Haar systems, dyadic shifts and paraproducts,
//! weighted norm measurement, stopping-time decompositions and Monte Carlo
//! kernel averaging, all resolved at a finest dyadic level of the periodic
//! unit cube in dimension 1 or 2.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomp;
pub mod error;
pub mod fit;
pub mod haar;
pub mod lattice;
pub mod represent;
pub mod rng;
pub mod shift;
pub mod signal;

pub use error::{Error, Result};
pub use lattice::{CubeId, GoodnessParams, Grid, Lattice};
pub use signal::{StepFunction, Weight};

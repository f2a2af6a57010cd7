//! Casimir force between a sphere and a plate carrying crossed sinusoidal
//! corrugations, computed with the proximity force approximation and the
//! derivative expansion, plus the electrostatic calibration of the AFM data.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod corrugation;
pub mod electrostatics;
pub mod error;
pub mod io;
pub mod kernel;
pub mod laplace;
pub mod lifshitz;
pub mod material;
pub mod quadrature;
pub mod spline;
pub mod table;

pub use error::{Error, Result};

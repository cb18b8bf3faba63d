//! Numerical engine for heat-kernel traces and spectral actions of
//! Laplace-type and Dirac operators on flat tori T^d.

pub mod accum;
pub mod error;
pub mod lattice;

pub mod clifford;
pub mod fields;

mod special;

pub use error::{Error, Result};

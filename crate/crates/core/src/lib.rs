//! Numerical laboratory for stochastic Navier-Stokes equations on thin
//! domains `Q x (0, eps)` and their two-dimensional limit on `Q`.

pub mod error;
pub mod grid;
pub mod spectral;
pub mod stokes;
pub mod advect;
pub mod avgops;
pub mod stats;
pub mod dump;
pub mod noise;
pub mod nse;
pub mod harness;

pub use error::{Error, Result};
pub use grid::*;

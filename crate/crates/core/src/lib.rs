//! Polarizable multipole Poisson–Boltzmann solver on Cartesian grids with
//! matched-interface treatment of the dielectric boundary.

pub mod assemble;
pub mod config;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod kirkwood;
pub mod linsolve;
pub mod mib;
pub mod multipole;
pub mod pipeline;
pub mod polarization;
pub mod units;

pub use error::{Error, ErrorKind, Result};

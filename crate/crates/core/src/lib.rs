//! Harmonic activation and transport on Z^2: lattice geometry, the potential
//! kernel, exact hitting solvers, the HAT chain and cluster collapse tools.

pub mod cluster;
pub mod error;
pub mod harmonic;
pub mod hat;
pub mod lattice;
pub mod linalg;
pub mod markov;
pub mod potential;
pub mod squares;

pub use error::{HatError, Result};
pub use lattice::{Config, Site};
pub use potential::{default_table, PotentialTable};

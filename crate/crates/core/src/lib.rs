//! Numerical laboratory for the probabilistic Cauchy theory of the cubic
//! Klein-Gordon equation with data randomized in phase space.

pub mod cones;
pub mod decomposition;
pub mod error;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod propagator;
pub mod randomization;
pub mod solver;
pub mod wavepackets;

pub use error::{Error, Result};

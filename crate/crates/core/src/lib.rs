//! Simulation of random walks between heavy-tailed, randomly spaced targets on
//! the line, together with samplers for their scaling limit and the statistics
//! used to compare the two.

pub mod error;
pub mod experiment;
pub mod heavy_tail;
pub mod limit;
pub mod medium;
pub mod rng;
pub mod stats;
pub mod walker;

pub use error::{Error, Result};

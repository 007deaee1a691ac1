pub mod config;
pub mod error;
pub mod harness;
pub mod hypothesis;
pub mod integrators;
pub mod levy;
pub mod model;
pub mod quad;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};

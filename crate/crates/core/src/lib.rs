pub mod config;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod measurement;
pub mod potential;
pub mod output;
pub mod propagator;
pub mod runner;
pub mod validation;
pub mod wigner;

pub use error::{Error, Result};

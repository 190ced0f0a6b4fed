//! Coevolutionary neuroevolution of generator and discriminator populations.

pub mod backend;
pub mod coevolution;
pub mod error;
pub mod experiment;
pub mod fitness;
pub mod gan;
pub mod genome;
pub mod rng;
pub mod variation;

pub use error::{Error, Result};

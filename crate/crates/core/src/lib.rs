pub mod a2c;
pub mod cluster;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod sharing;
pub mod vae;

pub use error::{Error, Result};

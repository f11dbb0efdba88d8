pub mod error;
pub mod gauss;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod oracles;
pub mod rng;
pub mod sims;
pub mod train;

pub use error::{Error, Result};

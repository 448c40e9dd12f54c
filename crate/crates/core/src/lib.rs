pub mod error;
pub mod freealg;
pub mod heston_bench;
pub mod moment_match;
pub mod rk_integrator;
pub mod rk_trees;
pub mod sampling;
pub mod scalar;
pub mod schemes;

pub use error::{Error, Result};

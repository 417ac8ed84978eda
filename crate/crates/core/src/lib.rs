pub mod cluster;
pub mod cluster_fit;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod factor;
pub mod hierarchy;
pub mod io;
pub mod ols;
pub mod rng;
pub mod spin;

pub use error::{Error, Result};

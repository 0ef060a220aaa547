pub mod cli;
pub mod crossbar;
pub mod device;
pub mod error;
pub mod mapping;
pub mod metrics;
pub mod placement;
pub mod rng;
pub mod serde_util;
pub mod workload;

pub use error::{Error, Result};

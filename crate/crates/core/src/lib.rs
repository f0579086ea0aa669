pub mod config;
pub mod devices;
pub mod error;
pub mod eval;
pub mod features;
pub mod fingerprint;
mod ini;
pub mod model;
pub mod pipeline;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};

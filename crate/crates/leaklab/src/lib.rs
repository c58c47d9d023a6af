//! Dataset files, reports, plots and the `leaklab` command line on top of
//! [`leaklab_core`].

pub use leaklab_core as core;

pub mod analyze;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod export;
pub mod pipeline;
pub mod plot;

pub use error::{ConfigError, Error, Result};

//! Configuration-driven runs of the `kfp-core` solvers.

pub mod compare;
pub mod config;
pub mod error;
pub mod run;

pub use config::Config;
pub use error::{CliError, Result};

//! Run configs, file formats, spectra and the command line for `jc-core`.

pub mod cli;
pub mod config;
pub mod formats;
pub mod parallel;
pub mod spectrum;

pub use config::{ConfigError, Resolved, RunConfig};
pub use parallel::{Parallel, WallClock};
pub use spectrum::pulse_spectrum;

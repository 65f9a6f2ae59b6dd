//! Configuration-driven runner: reads a TOML run file, executes samplers,
//! kernels and probes from the `wrm` crate, and writes CSV / JSON / SVG
//! outputs with a hash manifest.

pub mod app;
pub mod config;
pub mod manifest;

pub use app::{execute, exit, run_and_write, Artifacts, CliError, Command};
pub use config::{ConfigError, Overrides, Resolved, RunConfig};

//! Workbench around `planforge-core`: configuration, run directories, the `planforge`
//! command line and the HTTP service.

pub mod cli;
pub mod config;
pub mod jobs;
pub mod ops;
pub mod render;
pub mod server;

use std::path::PathBuf;

pub use config::WorkbenchConfig;

/// Environment variable naming the artifact root.
pub const HOME_ENV: &str = "PLANFORGE_HOME";

/// Artifact root: `$PLANFORGE_HOME`, else `./planforge-home`.
pub fn home_dir() -> PathBuf {
    std::env::var_os(HOME_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("planforge-home"))
}

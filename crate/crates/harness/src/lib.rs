//! Mini-app launcher, restart driver and translation benchmark.

pub mod apps;
pub mod bench;
pub mod launcher;

pub use launcher::{digest, launch, restart, LaunchConfig, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown app `{0}`")]
    UnknownApp(String),
    #[error(transparent)]
    Core(#[from] vidmpi_core::Error),
    #[error("bad application state: {0}")]
    BadState(String),
    #[error("rank {0} panicked")]
    RankPanicked(u32),
    #[error("invalid configuration: {0}")]
    Config(String),
}

//! Command-line front end for the `bigjump` library.

pub mod commands;
pub mod config;
pub mod examples;
pub mod expr;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] bigjump::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

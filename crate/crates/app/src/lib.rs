//! Command-line pipeline and review service over `misinfo-core`.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod server;

pub use error::{AppError, AppResult};

//! Command-line orchestration for encrypted GWAS: CSV ingestion, key
//! management, the four pipeline phases and reporting.

pub mod audit;
pub mod commands;
pub mod error;
pub mod input;
pub mod manifest;

pub use error::{CliError, Result};

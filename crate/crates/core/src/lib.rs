//! Homomorphic encryption toolkit and encrypted semi-parallel GWAS.

pub mod cache;
pub mod ckks;
pub mod error;
pub mod gwas;
pub mod logreg;
pub mod matrix;
pub mod oracle;

pub use error::{Error, Result};

//! File formats, corpus curation and the command implementations behind the
//! `ctrieve` binary. Numerical work lives in `ctrieve-core`.

pub mod anonymize;
pub mod commands;
pub mod config;
pub mod curate;
pub mod error;
pub mod formats;
pub mod report;

pub use error::{CliError, CliResult};

//! File formats, configuration and commands around `noon-core`.

// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod plot;
pub mod reproduce;
pub mod scan;

pub use config::RunConfig;
pub use error::CliError;

//! Command-line front end for fusion subspace clustering: CSV in, labels,
//! bases, completed matrices and sweep tables out.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use args::{execute, Cli};
pub use config::RunConfig;
pub use error::CliError;

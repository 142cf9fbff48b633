//! IO, file formats, parallel studies and the `netfilter` command line on top
//! of [`netfilter_core`].

pub mod cli;
pub mod commands;
pub mod error;
pub mod io;
pub mod parallel;

pub use error::{CliError, Result};

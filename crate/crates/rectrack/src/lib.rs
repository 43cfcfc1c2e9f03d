//! File formats, configuration and command-line plumbing around
//! `rectrack-core`: checkpoints, PPM frames, sequence directories, report
//! CSVs and the `rectrack` subcommands.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv;
pub mod dataset;
pub mod error;
pub mod ppm;

pub use error::{Error, Result};

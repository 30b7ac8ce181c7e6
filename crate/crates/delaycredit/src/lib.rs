//! Firm-data ingestion, parallel drivers and CSV output around
//! `delaycredit-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod parallel;
pub mod verify;

pub use config::{Command, RunConfig};
pub use error::{CliError, Result};

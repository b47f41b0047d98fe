//! Files, formats and the command-line driver for `mpgvae-core`.
//!
//! The binary `mpgvae` exposes `train`, `sample`, `eval`, `gradcheck` and
//! `inspect`; each subcommand is also callable from [`commands`]. Exit codes
//! are fixed: 0 ok, 1 failed check or divergence, 2 configuration, 3 data,
//! 4 checkpoint, 5 empty input.

pub mod checkpoint;
pub mod commands;
pub mod config_file;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod sample;
pub mod svg;
pub mod train;

pub use error::{CliError, Result};

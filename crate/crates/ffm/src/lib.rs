//! File formats, reports and the command-line pipeline around [`ffm_core`].
//!
//! * [`checkpoint`]: versioned binary model files with atomic writes.
//! * [`config`]: the sectioned key-value run config.
//! * [`table`]: CSV ingestion and output.
//! * [`plot`]: small SVG line plots.
//! * [`output`]: the `--out` directory, its manifest and JSON-lines logs.
//! * [`commands`]: the `ffm` subcommands.
//! * [`checks`]: property suites behind `ffm verify` and the acceptance run.

pub mod checkpoint;
pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod table;

pub use error::{CliError, CliResult};

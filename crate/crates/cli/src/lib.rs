//! Library half of the `vn` binary: config parsing, file ingestion, and
//! the command implementations, kept in a lib target so integration tests
//! can exercise the pieces directly.

pub mod commands;
pub mod config;
pub mod dataio;
pub mod output;

//! Command-line front end for the `qfclink` toolkit.
//!
//! Everything the binary does lives here as a library — scenario parsing in
//! [`scenario`], the subcommand implementations in [`commands`] — so that
//! integration tests can call the same code paths the binary dispatches to.
//! The binary itself only parses arguments and maps errors to exit codes.

pub mod commands;
pub mod scenario;

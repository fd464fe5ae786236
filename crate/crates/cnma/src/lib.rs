//! Files, reports and the command-line interface around `cnma-core`.
//!
//! Commands: `fit`, `select`, `disconnect`, `simulate`, `generate` and `replay`. Exit codes:
//! 0 success, 2 input error, 3 model error, 4 internal or numerical failure.

pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod report;
pub mod simulate;

pub use error::{CliError, Result};

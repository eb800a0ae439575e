//! Scenario runner for the `thzqi` command-line tool.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod manifest;
pub mod runner;
pub mod scenario;

pub use runner::{run_text, RunError, RunOptions, RunOutcome};
pub use scenario::{Scenario, BUNDLED};

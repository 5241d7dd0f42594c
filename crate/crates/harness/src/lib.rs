//! Configuration, orchestration and persistence for `gkdv-core` runs.
//!
//! The `gkdv` binary is a thin wrapper over [`commands`]; output columns and
//! JSON fields are documented in `docs/schema.md`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{RunConfig, SCHEMA_VERSION};
pub use error::{HarnessError, Result};

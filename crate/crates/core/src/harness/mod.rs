//! Batch runs: configuration, command dispatch and file export.

pub mod cli;
pub mod config;
pub mod export;

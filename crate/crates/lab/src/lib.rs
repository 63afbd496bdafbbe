//! Training, evaluation and file formats around `ccl-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod train;

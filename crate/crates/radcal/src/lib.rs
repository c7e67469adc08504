//! File formats, reports and the command line for `radcal-core`.

pub mod checkpoint;
pub mod cli;
pub mod config_io;
pub mod dataset_io;
pub mod report;

pub use radcal_core;

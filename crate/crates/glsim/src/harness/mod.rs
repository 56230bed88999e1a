//! Statistics, experiment configuration, report output, and the acceptance
//! suite runner.

pub mod config;
pub mod report;
pub mod stats;
pub mod verify;

//! File formats, reports and the command-line front end for `bnsens-core`.

pub mod analysis;
pub mod cli;
pub mod generator;
pub mod netparse;
pub mod paramspec;
pub mod report;
pub mod sample;

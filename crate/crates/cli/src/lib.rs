//! File formats, configuration, experiment harness and verification suites
//! for the `pricerank` command line.

pub mod config;
pub mod harness;
pub mod io;
pub mod suites;

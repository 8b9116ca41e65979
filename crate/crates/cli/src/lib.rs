//! Config-driven command-line front end for the welfare-analysis library.

pub mod config;
pub mod run;

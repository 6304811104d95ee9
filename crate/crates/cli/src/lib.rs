//! Command-line front end for the `adaptive-dlm` library: fitting a single
//! series, simulating data, and running the simulation studies.

pub mod commands;
pub mod config;
pub mod error;
pub mod input;

//! Command-line front end: configuration files, experiment runner,
//! verification suites and file formats.

pub mod config;
pub mod eval;
pub mod io;
pub mod runner;
pub mod verify;

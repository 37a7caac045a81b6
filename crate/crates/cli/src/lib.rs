//! Command-line driver for the `otdual` solvers.

pub mod commands;
pub mod config;
pub mod io;

//! Command-line front end: configuration, run directories and drivers.

pub mod cache;
pub mod cli;
pub mod commands;
pub mod config;
pub mod drivers;
pub mod error;
pub mod io;
pub mod manifest;

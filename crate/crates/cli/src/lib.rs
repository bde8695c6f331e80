//! File formats, run configuration and subcommands for the `psh-inertia`
//! command-line tool.

pub mod commands;
pub mod config;
pub mod follow;
pub mod formats;

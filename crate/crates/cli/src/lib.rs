//! Command-line front end for the `bprttd` model: CSV loading, run
//! configuration, output files and the subcommands.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod output;

//! Library surface of the command-line front end, split out so the
//! verification suite and the binary share one implementation.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod output;

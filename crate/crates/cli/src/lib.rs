//! Library surface of the `polarloc` command-line tool, split out so
//! integration tests can drive the config, manifest and gradient-check
//! machinery directly.

pub mod commands;
pub mod config;
pub mod gradcheck;
pub mod manifest;

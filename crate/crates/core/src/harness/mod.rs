//! Experiment plumbing.

pub mod config;
pub mod experiment;
pub mod format;
pub mod hashbench;
pub mod repl;

//! Experiment runner, acceptance gate and command-line front end.

pub mod experiments;
pub mod output;
pub mod svg;
pub mod acceptance;
pub mod cli;

//! HTTP service and command-line front end for the insight pipeline.

pub mod api;
pub mod backends;
pub mod cli;

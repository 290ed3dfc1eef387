//! Command-line interface and HTTP service for the finder search engine.
//!
//! The library exposes the CLI argument model and the axum router so that
//! integration tests can drive both without spawning a separate process.

pub mod cli;
pub mod server;

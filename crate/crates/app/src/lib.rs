//! Command-line interface and HTTP service for the floodfuse engine.

pub mod cli;
pub mod server;

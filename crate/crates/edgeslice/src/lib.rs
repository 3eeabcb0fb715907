//! Orchestration service, client and experiment runner for edge application
//! slices.

pub mod assets;
pub mod client;
pub mod experiments;
pub mod server;

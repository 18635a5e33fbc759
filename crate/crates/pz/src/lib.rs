//! Command line and HTTP front ends over `pz_core`.

pub mod cli;
pub mod context;
pub mod server;

//! Command-line front end and HTTP annotation service.

pub mod args;
pub mod server;

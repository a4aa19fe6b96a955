pub mod active;
pub mod clustering;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod graph;
pub mod models;
pub mod numerics;
pub mod propagation;

pub use error::{Error, Result};

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod train;

pub use error::{Error, Result};

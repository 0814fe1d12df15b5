pub mod aggregate;
pub mod cli;
pub mod error;
pub mod io;
pub mod model;
pub mod query;
pub mod rasterize;
pub mod solver;
pub mod synthbench;

pub use error::{Error, Result};

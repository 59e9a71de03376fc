pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod packing;
pub mod train;
pub mod cli;

pub use error::{Error, Result};

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod rank;

pub use error::{Error, Result};

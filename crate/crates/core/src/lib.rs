pub mod clustering;
pub mod dataset;
pub mod error;
pub mod harness;
mod linalg;
pub mod metrics;
pub mod proximal;
pub mod solver;
pub mod tensor3;

pub use error::{Error, Result};
pub use linalg::row_orthonormality_error;

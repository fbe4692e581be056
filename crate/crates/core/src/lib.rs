pub mod error;
pub mod fnn;
pub mod fnn_solvers;
pub mod format;
pub mod harness;
pub mod linalg;
pub mod pinn;
pub mod pinn_solvers;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};

pub mod error;
pub mod linalg;
pub mod polyalg;

pub use error::{Error, Result};
pub mod matcurve;
pub mod problems;
pub mod localform;
pub mod lsred;
pub mod continuation;
pub mod checks;
pub mod cli;

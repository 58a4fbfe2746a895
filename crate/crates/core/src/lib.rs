pub mod banded;
pub mod dichotomy;
pub mod discrete;
pub mod error;
pub mod field;
pub mod linalg;
pub mod model;
pub mod profile;
pub mod resolvent;
pub mod symmetrizer;
pub mod timedomain;
pub mod cli;

pub use error::{Error, Result};

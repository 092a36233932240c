pub mod cli;
pub mod error;
pub mod landscape;
pub mod model;
pub mod objective;
pub mod optimizers;
pub mod rng;
pub mod transport;
pub mod xslib;

pub use error::{Error, Result};

pub mod cli;
pub mod concentration;
pub mod error;
pub mod io;
pub mod loss;
pub mod model;
pub mod recover;
pub mod rng;
pub mod sketch;
pub mod solve;

pub use error::{Error, Result};

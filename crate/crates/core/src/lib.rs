pub mod cart;
pub mod cli;
pub mod censoring;
pub mod cif;
pub mod data;
pub mod error;
pub mod losses;
pub mod oracles;
pub mod simulation;

pub use error::{Error, Result};

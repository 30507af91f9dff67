pub mod benchmarks;
pub mod capacity;
pub mod dde;
pub mod error;
pub mod reservoir;
pub mod spectra;
pub mod sweep;

pub use error::{Error, Result};

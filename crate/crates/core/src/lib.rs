pub mod analysis;
pub mod basis;
pub mod cli;
pub mod cutoff;
pub mod error;
pub mod fdtd;
pub mod field;
pub mod geometry;
pub mod io;
pub mod phantom;
pub mod quadrature;
pub mod reconstruct;
pub mod recording;
pub mod spectral;
pub mod specfun;

pub use error::{Error, Result};

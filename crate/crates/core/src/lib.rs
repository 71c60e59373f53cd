pub mod cli;
pub mod config;
pub mod error;
pub mod estimates;
pub mod fields;
pub mod flowmap;
pub mod galerkin;
pub mod grid;
pub mod io;
pub mod parabolic;
pub mod spectral;

pub use error::{Error, Result};

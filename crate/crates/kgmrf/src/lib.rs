pub mod bench;
pub mod error;
pub mod filters;
pub mod geometry;
pub mod linalg;
pub mod region_cov;
pub mod selftest;
pub mod synth;

pub use error::{Error, Result};

pub mod adaptivity;
pub mod basis;
pub mod bem;
pub mod checks;
pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod mesh;
pub mod problem;
pub mod spline;
pub mod topology;

pub use error::{Error, Result};

//! Probabilistic LiDAR range fields: learned return-probability densities
//! along rays, trained from repeated scans and rendered as point clouds.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod field;
pub mod io;
pub mod losses;
pub mod net;
pub mod render;
pub mod sampler;
pub mod sensor;
pub mod simscene;
pub mod streams;

pub use error::{Error, Result};

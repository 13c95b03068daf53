//! Pipeline driver for probabilistic LiDAR range fields.

pub mod commands;
pub mod config;
pub mod pipeline;

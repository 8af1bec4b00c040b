pub mod bench;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod features;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod knn;
pub mod optimizer;
pub mod pipeline;
pub mod report;
pub mod robust;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};

//! Symmetric multi-view stereo.
//!
//! Every view gets a depth map: a plane-sweep cost volume initializes it, then
//! all depth maps are refined jointly against photometric and cross-view
//! consistency losses while occlusion masks are re-estimated between phases.
//! Refined maps can be fused into a point cloud and scored against ground truth.

pub mod consistency;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod photometry;
mod reduce;
pub mod scenegen;
pub mod solver;
pub mod volume;

pub use error::{Error, Result};

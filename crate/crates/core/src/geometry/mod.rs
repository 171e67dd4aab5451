//! Camera models, plane-induced homographies, bilinear warping, view synthesis
//! and cross-view depth reprojection.

mod camera;
mod raster;
mod warp;

pub use camera::{
    apply_homography, check_views, plane_homography, Camera, CameraView, DepthHypotheses,
    RelativePose,
};
pub use raster::{DepthMap, Grid, Image};
pub(crate) use warp::Taps;
pub use warp::{
    bilinear_jacobian, bilinear_sample, synthesize_view, warp_depth, DepthWarp, WarpField,
};

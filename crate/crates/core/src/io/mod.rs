//! File formats: camera text files, PFM depth maps, Netpbm/PNG images, PLY
//! clouds, TOML configs and the bundle directory layout.

pub mod bundle;
pub mod camera;
pub mod config;
pub mod image;
pub mod pfm;
pub mod ply;

pub use bundle::{read_depth_dir, view_name, write_bundle, write_depth_dir, ProblemBundle};
pub use camera::{read_camera, write_camera, CameraFile};
pub use config::{RunConfig, SceneConfig};
pub use image::{read_image, write_image, write_mask};
pub use pfm::{read_pfm, write_pfm};
pub use ply::{read_ply, write_ply, PlyEncoding};

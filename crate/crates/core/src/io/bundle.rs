//! On-disk problem bundles:
//!
//! ```text
//! <root>/images/<name>.{ppm,pgm,png}
//! <root>/cams/<name>_cam.txt
//! <root>/gt/<name>.pfm        (optional)
//! <root>/run.toml             (optional)
//! ```
//!
//! Views are ordered by image file name.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, DepthHypotheses, DepthMap};
use crate::io::camera::{read_camera, write_camera, CameraFile};
use crate::io::config::RunConfig;
use crate::io::image::{read_image, write_image};
use crate::io::pfm::{read_pfm, write_pfm};

pub const IMAGES_DIR: &str = "images";
pub const CAMS_DIR: &str = "cams";
pub const GT_DIR: &str = "gt";
pub const RUN_CONFIG: &str = "run.toml";

const IMAGE_EXTENSIONS: [&str; 4] = ["ppm", "pgm", "pnm", "png"];

/// File stem of view `i`.
pub fn view_name(i: usize) -> String {
    format!("{i:08}")
}

#[derive(Debug, Clone)]
pub struct ProblemBundle {
    pub root: PathBuf,
    pub names: Vec<String>,
    pub views: Vec<CameraView>,
    /// `(depth_min, depth_interval)` from each camera file.
    pub ranges: Vec<(f64, f64)>,
    pub gt: Option<Vec<DepthMap>>,
    pub run: RunConfig,
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        out.push(entry.path());
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

impl ProblemBundle {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let images: Vec<PathBuf> = list_dir(&root.join(IMAGES_DIR))?
            .into_iter()
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        if images.len() < 2 {
            return Err(Error::TooFewViews(images.len()));
        }
        let mut names = Vec::new();
        let mut views = Vec::new();
        let mut ranges = Vec::new();
        for path in &images {
            let name = stem(path);
            let image = read_image(path)?;
            let cam_path = root.join(CAMS_DIR).join(format!("{name}_cam.txt"));
            let CameraFile {
                camera,
                depth_min,
                depth_interval,
            } = read_camera(&cam_path)?;
            views.push(CameraView::new(camera, image)?);
            ranges.push((depth_min, depth_interval));
            names.push(name);
        }
        let gt_dir = root.join(GT_DIR);
        let gt = if gt_dir.is_dir() {
            let maps = names
                .iter()
                .map(|n| read_pfm(gt_dir.join(format!("{n}.pfm"))))
                .collect::<Result<Vec<_>>>()?;
            Some(maps)
        } else {
            None
        };
        let run_path = root.join(RUN_CONFIG);
        let run = if run_path.is_file() {
            RunConfig::read(&run_path)?
        } else {
            RunConfig::default()
        };
        let bundle = ProblemBundle {
            root,
            names,
            views,
            ranges,
            gt,
            run,
        };
        crate::geometry::check_views(&bundle.views)?;
        Ok(bundle)
    }

    /// One hypothesis set shared by all views, spanning the union of the
    /// per-camera ranges with `count` samples. When every camera lists the
    /// same range this is exactly that range.
    pub fn hypotheses(&self, count: usize) -> Result<DepthHypotheses> {
        if count < 2 {
            return Err(Error::InvalidArgument("need at least 2 depth hypotheses".into()));
        }
        let first = self.ranges[0];
        if self.ranges.iter().all(|&r| r == first) {
            return DepthHypotheses::from_interval(first.0, first.1, count);
        }
        let steps = (count - 1) as f64;
        let lo = self.ranges.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let hi = self
            .ranges
            .iter()
            .map(|r| r.0 + r.1 * steps)
            .fold(f64::NEG_INFINITY, f64::max);
        DepthHypotheses::new(lo, hi, count)
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes a bundle with PPM (or PGM) images named by [`view_name`].
pub fn write_bundle(
    root: impl AsRef<Path>,
    views: &[CameraView],
    range: (f64, f64),
    gt: Option<&[DepthMap]>,
    run: &RunConfig,
) -> Result<()> {
    let root = root.as_ref();
    for d in [IMAGES_DIR, CAMS_DIR] {
        create_dir(&root.join(d))?;
    }
    for (i, v) in views.iter().enumerate() {
        let name = view_name(i);
        let ext = if v.image.channels() == 1 { "pgm" } else { "ppm" };
        write_image(root.join(IMAGES_DIR).join(format!("{name}.{ext}")), &v.image)?;
        let cam = CameraFile {
            camera: v.camera.clone(),
            depth_min: range.0,
            depth_interval: range.1,
        };
        write_camera(root.join(CAMS_DIR).join(format!("{name}_cam.txt")), &cam)?;
    }
    if let Some(gt) = gt {
        let names: Vec<String> = (0..gt.len()).map(view_name).collect();
        write_depth_dir(root.join(GT_DIR), &names, gt)?;
    }
    let path = root.join(RUN_CONFIG);
    std::fs::write(&path, run.to_toml()).map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/<name>.pfm` for every map.
pub fn write_depth_dir(dir: impl AsRef<Path>, names: &[String], depths: &[DepthMap]) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    for (name, d) in names.iter().zip(depths) {
        write_pfm(dir.join(format!("{name}.pfm")), d)?;
    }
    Ok(())
}

/// Every `.pfm` in `dir`, ordered by name.
pub fn read_depth_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, DepthMap)>> {
    list_dir(dir.as_ref())?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "pfm"))
        .map(|p| Ok((stem(&p), read_pfm(&p)?)))
        .collect()
}

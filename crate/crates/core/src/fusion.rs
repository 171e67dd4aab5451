//! Multi-view consistent depth fusion into a single world-frame point cloud.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{check_views, CameraView, DepthMap, Grid};
use crate::reduce::sorted_sum;

/// Default number of agreeing views a pixel needs to survive.
pub const DEFAULT_MIN_VIEWS: usize = 2;

/// World-frame points with optional RGB colors in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, colors: Option<Vec<[f64; 3]>>) -> Result<Self> {
        let cloud = PointCloud { points, colors };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(Error::shape(
                    format!("{} colors", self.points.len()),
                    format!("{} colors", c.len()),
                ));
            }
        }
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFiniteResult(format!("point {i}")));
        }
        Ok(())
    }

    /// Coordinates as plain arrays.
    pub fn coords(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p.x, p.y, p.z]).collect()
    }
}

fn check_aligned(depths: &[DepthMap], views: &[CameraView]) -> Result<()> {
    if depths.len() != views.len() {
        return Err(Error::shape(
            format!("{} depth maps", views.len()),
            format!("{} depth maps", depths.len()),
        ));
    }
    for (d, v) in depths.iter().zip(views) {
        if d.width() != v.width() || d.height() != v.height() {
            return Err(Error::shape(
                format!("{}x{}", v.width(), v.height()),
                format!("{}x{}", d.width(), d.height()),
            ));
        }
    }
    Ok(())
}

/// Keeps the pixels of each view whose depth is confirmed by at least
/// `min_views` other views within `tau`, replacing each survivor by the mean
/// of its own depth and the agreeing re-projected depths.
pub fn filter_consistent(
    depths: &[DepthMap],
    views: &[CameraView],
    tau: f64,
    min_views: usize,
) -> Result<Vec<DepthMap>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    if min_views == 0 {
        return Err(Error::InvalidArgument("min_views must be at least 1".into()));
    }
    check_views(views)?;
    check_aligned(depths, views)?;
    (0..views.len())
        .map(|i| {
            let di = &depths[i];
            let projected: Vec<DepthMap> = (0..views.len())
                .filter(|&j| j != i)
                .map(|j| {
                    crate::geometry::warp_depth(
                        &depths[j],
                        di,
                        &views[j].camera,
                        &views[i].camera,
                    )
                })
                .collect::<Result<_>>()?;
            let (w, h) = (di.width(), di.height());
            let mut values = Grid::new(w, h, 0.0);
            let mut valid = Grid::new(w, h, false);
            for y in 0..h {
                for x in 0..w {
                    let Some(d) = di.depth(x, y) else { continue };
                    let mut agreeing = vec![d];
                    agreeing.extend(
                        projected
                            .iter()
                            .filter_map(|p| p.depth(x, y))
                            .filter(|&dp| (d - dp).abs() <= tau),
                    );
                    if agreeing.len() > min_views {
                        let n = agreeing.len() as f64;
                        *values.get_mut(x, y) = sorted_sum(&mut agreeing) / n;
                        *valid.get_mut(x, y) = true;
                    }
                }
            }
            Ok(DepthMap { values, valid })
        })
        .collect()
}

/// Back-projects every valid pixel into the world frame, in view order then
/// row-major pixel order. Colors come from the view's image; single-channel
/// images give gray.
pub fn depths_to_cloud(filtered: &[DepthMap], views: &[CameraView]) -> Result<PointCloud> {
    check_aligned(filtered, views)?;
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for (d, v) in filtered.iter().zip(views) {
        let cam = &v.camera;
        for y in 0..d.height() {
            for x in 0..d.width() {
                let Some(z) = d.depth(x, y) else { continue };
                let p = cam.camera_to_world(&cam.backproject(x as f64, y as f64, z));
                points.push(p);
                let px = v.image.pixel(x, y);
                colors.push(match px.len() {
                    0 => [0.0; 3],
                    1 | 2 => [px[0]; 3],
                    _ => [px[0], px[1], px[2]],
                });
            }
        }
    }
    PointCloud::new(points, Some(colors))
}

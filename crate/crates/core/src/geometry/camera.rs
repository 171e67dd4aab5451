//! Pinhole cameras, depth hypotheses and plane-induced homographies.
//!
//! Pixel centers sit at integer coordinates; a camera-frame point `x` projects
//! to `K·x / x_z`.

use nalgebra::{Matrix3, Vector3};

use super::raster::Image;
use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Intrinsics plus world-to-camera pose (`x_cam = R·x_world + t`).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Camera {
            intrinsics,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `center` looking at `target`; `up` fixes roll (image y points
    /// along `-up`).
    pub fn look_at(
        intrinsics: Matrix3<f64>,
        center: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let z = (target - center).normalize();
        let x = z.cross(&(-up));
        if x.norm() < 1e-12 {
            return Err(Error::InvalidCamera("up vector parallel to viewing direction".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * center);
        Camera::new(intrinsics, rotation, translation)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if k.iter().any(|v| !v.is_finite())
            || self.rotation.iter().any(|v| !v.is_finite())
            || self.translation.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidCamera("non-finite entry".into()));
        }
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(Error::InvalidCamera("intrinsics must be upper triangular".into()));
        }
        if k[(0, 0)] <= 0.0 || k[(1, 1)] <= 0.0 || k[(2, 2)] <= 0.0 {
            return Err(Error::InvalidCamera("focal entries must be positive".into()));
        }
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Matrix3::identity()).abs().max() > ORTHO_TOL {
            return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
        }
        if (self.rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidCamera("rotation determinant is not +1".into()));
        }
        Ok(())
    }

    pub fn intrinsics_inverse(&self) -> Matrix3<f64> {
        // Upper triangular with positive diagonal, always invertible.
        self.intrinsics
            .try_inverse()
            .expect("validated intrinsics are invertible")
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Projects a camera-frame point; `None` behind the camera.
    pub fn project(&self, p_cam: &Vector3<f64>) -> Option<[f64; 2]> {
        let u = self.intrinsics * p_cam;
        if u.z <= 0.0 {
            return None;
        }
        Some([u.x / u.z, u.y / u.z])
    }

    /// Camera-frame point at `depth` along the ray of pixel `(x, y)`.
    pub fn backproject(&self, x: f64, y: f64, depth: f64) -> Vector3<f64> {
        let ray = self.intrinsics_inverse() * Vector3::new(x, y, 1.0);
        ray * (depth / ray.z)
    }

    /// Bitwise identical intrinsics and pose.
    pub fn same_as(&self, other: &Camera) -> bool {
        self == other
    }
}

/// Pose taking points from the `src` camera frame to the `dst` camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RelativePose {
    pub fn between(src: &Camera, dst: &Camera) -> Self {
        let rotation = dst.rotation * src.rotation.transpose();
        let translation = dst.translation - rotation * src.translation;
        RelativePose {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// A camera with its image.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub camera: Camera,
    pub image: Image,
}

impl CameraView {
    pub fn new(camera: Camera, image: Image) -> Result<Self> {
        camera.validate()?;
        Ok(CameraView { camera, image })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.image.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Checks that all views share image dimensions and channel count.
pub fn check_views(views: &[CameraView]) -> Result<()> {
    if let Some(first) = views.first() {
        for v in &views[1..] {
            if !v.image.same_shape(&first.image) {
                return Err(Error::shape(first.image.shape_str(), v.image.shape_str()));
            }
        }
    }
    Ok(())
}

/// Depth samples uniform in depth, inclusive of both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHypotheses {
    d_min: f64,
    d_max: f64,
    samples: Vec<f64>,
}

impl DepthHypotheses {
    pub fn new(d_min: f64, d_max: f64, count: usize) -> Result<Self> {
        if !(d_min > 0.0 && d_max > d_min && d_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "depth range must satisfy 0 < d_min < d_max, got [{d_min}, {d_max}]"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidArgument("need at least 2 depth hypotheses".into()));
        }
        let step = (d_max - d_min) / (count - 1) as f64;
        let mut samples: Vec<f64> = (0..count).map(|k| d_min + step * k as f64).collect();
        samples[count - 1] = d_max;
        Ok(DepthHypotheses {
            d_min,
            d_max,
            samples,
        })
    }

    /// Range given as a start depth and a sample interval (camera-file convention).
    pub fn from_interval(d_min: f64, interval: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidArgument("need at least 2 depth hypotheses".into()));
        }
        DepthHypotheses::new(d_min, d_min + interval * (count - 1) as f64, count)
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        (self.d_max - self.d_min) / (self.samples.len() - 1) as f64
    }

    pub fn clamp(&self, d: f64) -> f64 {
        d.clamp(self.d_min, self.d_max)
    }
}

/// Homography mapping `src` pixels on the fronto-parallel plane `z = depth`
/// (in `src`'s camera frame) to `dst` pixels, normalized so `H[2,2] = 1`.
pub fn plane_homography(src: &Camera, dst: &Camera, depth: f64) -> Result<Matrix3<f64>> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::NonFiniteResult(format!("plane depth {depth}")));
    }
    let rel = RelativePose::between(src, dst);
    let normal = Vector3::new(0.0, 0.0, 1.0);
    // On the plane n·x = depth, so x_dst = (R + t·nᵀ/depth)·x.
    let m = rel.rotation + rel.translation * normal.transpose() / depth;
    let h = dst.intrinsics * m * src.intrinsics_inverse();
    let scale = h[(2, 2)];
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::NonFiniteResult("homography has zero scale".into()));
    }
    let h = h / scale;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResult("homography".into()));
    }
    Ok(h)
}

/// Applies a homography to pixel `(x, y)`; `None` if it maps to infinity.
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> Option<[f64; 2]> {
    let u = h * Vector3::new(x, y, 1.0);
    if u.z == 0.0 {
        return None;
    }
    Some([u.x / u.z, u.y / u.z])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(f: f64, cx: f64, cy: f64) -> Matrix3<f64> {
        Matrix3::new(f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0)
    }

    #[test]
    fn rejects_bad_rotation() {
        let r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(k(10.0, 5.0, 5.0), r, Vector3::zeros()).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(k(10.0, 5.0, 5.0), reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn rejects_non_positive_focal() {
        let kk = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(kk, Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let cam = Camera::look_at(
            k(50.0, 20.0, 15.0),
            Vector3::new(3.0, -1.0, -2.0),
            Vector3::new(0.0, 0.0, 10.0),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .unwrap();
        let p = cam.world_to_camera(&Vector3::new(0.0, 0.0, 10.0));
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        assert!((cam.center() - Vector3::new(3.0, -1.0, -2.0)).norm() < 1e-12);
    }

    #[test]
    fn hypotheses_endpoints_and_spacing() {
        let h = DepthHypotheses::new(425.0, 935.0, 192).unwrap();
        assert_eq!(h.samples()[0], 425.0);
        assert_eq!(h.samples()[191], 935.0);
        let s = h.spacing();
        for w in h.samples().windows(2) {
            assert!((w[1] - w[0] - s).abs() < 1e-9);
        }
        assert!(DepthHypotheses::new(0.0, 1.0, 4).is_err());
        assert!(DepthHypotheses::new(2.0, 1.0, 4).is_err());
    }

    #[test]
    fn self_homography_is_identity() {
        let cam = Camera::look_at(
            k(60.0, 31.5, 23.5),
            Vector3::new(1.0, 2.0, 0.0),
            Vector3::new(0.0, 0.0, 50.0),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .unwrap();
        let h = plane_homography(&cam, &cam, 37.0).unwrap();
        assert!((h - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn homography_rejects_non_positive_depth() {
        let cam = Camera::new(k(1.0, 0.0, 0.0), Matrix3::identity(), Vector3::zeros()).unwrap();
        assert!(matches!(
            plane_homography(&cam, &cam, 0.0),
            Err(Error::NonFiniteResult(_))
        ));
    }
}

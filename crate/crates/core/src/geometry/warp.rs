//! Bilinear sampling and depth-driven inverse warping, with the adjoints needed
//! to push loss gradients back onto depth maps.

use nalgebra::{Matrix3, Vector3};

use super::camera::{Camera, CameraView, RelativePose};
use super::raster::{DepthMap, Grid, Image};
use crate::error::{Error, Result};

/// Continuous source coordinates for every target pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    pub coords: Grid<[f64; 2]>,
    pub in_bounds: Grid<bool>,
}

impl WarpField {
    /// Builds a field, deriving `in_bounds` against a `width × height` source.
    pub fn from_coords(coords: Grid<[f64; 2]>, width: usize, height: usize) -> Self {
        let in_bounds = coords.map(|&[x, y]| in_bounds(x, y, width, height));
        WarpField { coords, in_bounds }
    }

    pub fn identity(width: usize, height: usize) -> Self {
        let coords = Grid::from_fn(width, height, |x, y| [x as f64, y as f64]);
        WarpField::from_coords(coords, width, height)
    }

    pub fn width(&self) -> usize {
        self.coords.width()
    }

    pub fn height(&self) -> usize {
        self.coords.height()
    }
}

#[inline]
fn in_bounds(x: f64, y: f64, width: usize, height: usize) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64
}

/// The four lattice neighbours of a continuous coordinate and its fractional offsets.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Taps {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
}

impl Taps {
    #[inline]
    pub fn locate(x: f64, y: f64, width: usize, height: usize) -> Option<Taps> {
        if !in_bounds(x, y, width, height) {
            return None;
        }
        let (x0, x1) = lattice(x, width);
        let (y0, y1) = lattice(y, height);
        Some(Taps {
            x0,
            y0,
            x1,
            y1,
            fx: x - x0 as f64,
            fy: y - y0 as f64,
        })
    }

    /// `(x, y, weight)` for each tap, in fixed order 00, 10, 01, 11.
    #[inline]
    pub fn weighted(&self) -> [(usize, usize, f64); 4] {
        let (fx, fy) = (self.fx, self.fy);
        [
            (self.x0, self.y0, (1.0 - fx) * (1.0 - fy)),
            (self.x1, self.y0, fx * (1.0 - fy)),
            (self.x0, self.y1, (1.0 - fx) * fy),
            (self.x1, self.y1, fx * fy),
        ]
    }

    /// True if every tap carrying non-zero weight is valid.
    #[inline]
    pub fn all_valid(&self, valid: &Grid<bool>) -> bool {
        self.weighted()
            .iter()
            .all(|&(x, y, w)| w == 0.0 || *valid.get(x, y))
    }

    #[inline]
    pub fn interpolate(&self, v00: f64, v10: f64, v01: f64, v11: f64) -> f64 {
        let (fx, fy) = (self.fx, self.fy);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }

    /// Partial derivatives of the interpolant with respect to `(x, y)`.
    #[inline]
    pub fn gradient(&self, v00: f64, v10: f64, v01: f64, v11: f64) -> [f64; 2] {
        let (fx, fy) = (self.fx, self.fy);
        [
            (1.0 - fy) * (v10 - v00) + fy * (v11 - v01),
            (1.0 - fx) * (v01 - v00) + fx * (v11 - v10),
        ]
    }

    #[inline]
    pub fn sample_grid(&self, g: &Grid<f64>) -> f64 {
        self.interpolate(
            *g.get(self.x0, self.y0),
            *g.get(self.x1, self.y0),
            *g.get(self.x0, self.y1),
            *g.get(self.x1, self.y1),
        )
    }

    #[inline]
    pub fn gradient_grid(&self, g: &Grid<f64>) -> [f64; 2] {
        self.gradient(
            *g.get(self.x0, self.y0),
            *g.get(self.x1, self.y0),
            *g.get(self.x0, self.y1),
            *g.get(self.x1, self.y1),
        )
    }

    #[inline]
    pub fn sample_channel(&self, img: &Image, c: usize) -> f64 {
        self.interpolate(
            img.get(self.x0, self.y0, c),
            img.get(self.x1, self.y0, c),
            img.get(self.x0, self.y1, c),
            img.get(self.x1, self.y1, c),
        )
    }

    #[inline]
    pub fn gradient_channel(&self, img: &Image, c: usize) -> [f64; 2] {
        self.gradient(
            img.get(self.x0, self.y0, c),
            img.get(self.x1, self.y0, c),
            img.get(self.x0, self.y1, c),
            img.get(self.x1, self.y1, c),
        )
    }
}

#[inline]
fn lattice(v: f64, n: usize) -> (usize, usize) {
    if n == 1 {
        return (0, 0);
    }
    let i0 = (v.floor() as usize).min(n - 2);
    (i0, i0 + 1)
}

/// Samples `image` at every coordinate of `field`. Out-of-bounds outputs are 0
/// and flagged invalid.
pub fn bilinear_sample(image: &Image, field: &WarpField) -> Result<(Image, Grid<bool>)> {
    if field.width() != image.width() || field.height() != image.height() {
        return Err(Error::shape(
            format!("{}x{}", image.width(), image.height()),
            format!("{}x{}", field.width(), field.height()),
        ));
    }
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let mut out = Image::new(w, h, ch);
    let mut valid = Grid::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !*field.in_bounds.get(x, y) {
                continue;
            }
            let [sx, sy] = *field.coords.get(x, y);
            if let Some(t) = Taps::locate(sx, sy, w, h) {
                let px = out.pixel_mut(x, y);
                for (c, v) in px.iter_mut().enumerate() {
                    *v = t.sample_channel(image, c);
                }
                *valid.get_mut(x, y) = true;
            }
        }
    }
    Ok((out, valid))
}

/// Jacobian of the bilinear interpolant at `(x, y)`: one `[∂/∂x, ∂/∂y]` per channel.
/// `None` outside the image.
pub fn bilinear_jacobian(image: &Image, x: f64, y: f64) -> Option<Vec<[f64; 2]>> {
    let t = Taps::locate(x, y, image.width(), image.height())?;
    Some(
        (0..image.channels())
            .map(|c| t.gradient_channel(image, c))
            .collect(),
    )
}

/// Pixels of one view pushed through their depth into another view.
///
/// For pixel `p` with depth `d`: `u = d·A(p) + e`, `q = (u_x/u_z, u_y/u_z)` with
/// `A(p) = K_to·R_rel·ray(p)` and `e = K_to·t_rel`.
#[derive(Debug, Clone)]
pub struct DepthWarp {
    pub field: WarpField,
    /// in bounds, depth valid and in front of the destination camera.
    pub valid: Grid<bool>,
    dcoords: Grid<[f64; 2]>,
    identity: bool,
}

impl DepthWarp {
    /// Warp of `from`'s pixels (carrying `depth`) into a `width × height` image of `to`.
    pub fn new(depth: &DepthMap, from: &Camera, to: &Camera, width: usize, height: usize) -> Self {
        let (w, h) = (depth.width(), depth.height());
        if from.same_as(to) {
            let field = WarpField::identity(w, h);
            let valid = field.in_bounds.and(&depth.valid);
            return DepthWarp {
                field,
                valid,
                dcoords: Grid::new(w, h, [0.0, 0.0]),
                identity: true,
            };
        }
        let rel = RelativePose::between(from, to);
        let kinv = from.intrinsics_inverse();
        let a_mat: Matrix3<f64> = to.intrinsics * rel.rotation;
        let e = to.intrinsics * rel.translation;
        let mut coords = Grid::new(w, h, [f64::NAN, f64::NAN]);
        let mut dcoords = Grid::new(w, h, [0.0, 0.0]);
        let mut valid = Grid::new(w, h, false);
        let mut in_b = Grid::new(w, h, false);
        for y in 0..h {
            for x in 0..w {
                let ray = kinv * Vector3::new(x as f64, y as f64, 1.0);
                let ray = ray / ray.z;
                let a = a_mat * ray;
                let d = *depth.values.get(x, y);
                let u = a * d + e;
                let q = [u.x / u.z, u.y / u.z];
                let iz2 = 1.0 / (u.z * u.z);
                *dcoords.get_mut(x, y) = [
                    (a.x * u.z - u.x * a.z) * iz2,
                    (a.y * u.z - u.y * a.z) * iz2,
                ];
                *coords.get_mut(x, y) = q;
                let inside = u.z > 0.0 && in_bounds(q[0], q[1], width, height);
                *in_b.get_mut(x, y) = inside;
                *valid.get_mut(x, y) = inside && *depth.valid.get(x, y);
            }
        }
        DepthWarp {
            field: WarpField {
                coords,
                in_bounds: in_b,
            },
            valid,
            dcoords,
            identity: false,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// `∂q/∂d` at pixel `(x, y)`.
    pub fn coord_derivative(&self, x: usize, y: usize) -> [f64; 2] {
        *self.dcoords.get(x, y)
    }

    #[inline]
    fn taps(&self, x: usize, y: usize, width: usize, height: usize) -> Option<Taps> {
        if !*self.valid.get(x, y) {
            return None;
        }
        let [sx, sy] = *self.field.coords.get(x, y);
        Taps::locate(sx, sy, width, height)
    }

    /// Samples `image` through the warp. With `taps_valid`, an output is valid
    /// only if every tap carrying weight is valid there.
    pub fn sample(&self, image: &Image, taps_valid: Option<&Grid<bool>>) -> (Image, Grid<bool>) {
        let (w, h) = (self.valid.width(), self.valid.height());
        let (iw, ih, ch) = (image.width(), image.height(), image.channels());
        let mut out = Image::new(w, h, ch);
        let mut valid = Grid::new(w, h, false);
        for y in 0..h {
            for x in 0..w {
                let Some(t) = self.taps(x, y, iw, ih) else {
                    continue;
                };
                if let Some(tv) = taps_valid {
                    if !t.all_valid(tv) {
                        continue;
                    }
                }
                let px = out.pixel_mut(x, y);
                for (c, v) in px.iter_mut().enumerate() {
                    *v = t.sample_channel(image, c);
                }
                *valid.get_mut(x, y) = true;
            }
        }
        (out, valid)
    }

    /// Adjoint of [`DepthWarp::sample`]: accumulates `∂L/∂depth` of the warped
    /// view and, optionally, `∂L/∂image`.
    pub fn sample_backward(
        &self,
        image: &Image,
        grad_out: &Image,
        grad_depth: &mut Grid<f64>,
        mut grad_image: Option<&mut Image>,
    ) {
        let (w, h) = (self.valid.width(), self.valid.height());
        let (iw, ih, ch) = (image.width(), image.height(), image.channels());
        for y in 0..h {
            for x in 0..w {
                let g = grad_out.pixel(x, y);
                if g.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let Some(t) = self.taps(x, y, iw, ih) else {
                    continue;
                };
                if !self.identity {
                    let mut gq = [0.0; 2];
                    for (c, &gc) in g.iter().enumerate() {
                        let [dx, dy] = t.gradient_channel(image, c);
                        gq[0] += gc * dx;
                        gq[1] += gc * dy;
                    }
                    let [qx, qy] = *self.dcoords.get(x, y);
                    *grad_depth.get_mut(x, y) += gq[0] * qx + gq[1] * qy;
                }
                if let Some(gi) = grad_image.as_deref_mut() {
                    for (tx, ty, wt) in t.weighted() {
                        if wt == 0.0 {
                            continue;
                        }
                        let dst = gi.pixel_mut(tx, ty);
                        for c in 0..ch {
                            dst[c] += wt * g[c];
                        }
                    }
                }
            }
        }
    }

    /// Depth of `source_depth`'s surface expressed in the frame this warp starts
    /// from (the target). `self` must map target pixels into the source view.
    ///
    /// The source map is interpolated in inverse depth, which is exact on planes.
    pub fn warp_depth(&self, source_depth: &DepthMap, source: &Camera, target: &Camera) -> DepthMap {
        let (w, h) = (self.valid.width(), self.valid.height());
        let (sw, sh) = (source_depth.width(), source_depth.height());
        if self.identity {
            let valid = self.valid.and(&source_depth.valid);
            let values = Grid::from_fn(w, h, |x, y| {
                if *valid.get(x, y) {
                    *source_depth.values.get(x, y)
                } else {
                    0.0
                }
            });
            return DepthMap { values, valid };
        }
        let lift = DepthLift::new(source, target);
        let inv = inverse_depth(source_depth);
        let mut values = Grid::new(w, h, 0.0);
        let mut valid = Grid::new(w, h, false);
        for y in 0..h {
            for x in 0..w {
                let Some(t) = self.taps(x, y, sw, sh) else {
                    continue;
                };
                if !t.all_valid(&source_depth.valid) {
                    continue;
                }
                let [qx, qy] = *self.field.coords.get(x, y);
                let s = 1.0 / t.sample_grid(&inv);
                let z = s * lift.ray_z(qx, qy) + lift.t_z;
                if z > 0.0 && z.is_finite() {
                    *values.get_mut(x, y) = z;
                    *valid.get_mut(x, y) = true;
                }
            }
        }
        DepthMap { values, valid }
    }

    /// Adjoint of [`DepthWarp::warp_depth`].
    pub fn warp_depth_backward(
        &self,
        source_depth: &DepthMap,
        source: &Camera,
        target: &Camera,
        grad_out: &Grid<f64>,
        grad_target: &mut Grid<f64>,
        grad_source: &mut Grid<f64>,
    ) {
        let (w, h) = (self.valid.width(), self.valid.height());
        let (sw, sh) = (source_depth.width(), source_depth.height());
        if self.identity {
            for y in 0..h {
                for x in 0..w {
                    let g = *grad_out.get(x, y);
                    if g != 0.0 && *self.valid.get(x, y) && *source_depth.valid.get(x, y) {
                        *grad_source.get_mut(x, y) += g;
                    }
                }
            }
            return;
        }
        let lift = DepthLift::new(source, target);
        let inv = inverse_depth(source_depth);
        for y in 0..h {
            for x in 0..w {
                let g = *grad_out.get(x, y);
                if g == 0.0 {
                    continue;
                }
                let Some(t) = self.taps(x, y, sw, sh) else {
                    continue;
                };
                if !t.all_valid(&source_depth.valid) {
                    continue;
                }
                let [qx, qy] = *self.field.coords.get(x, y);
                let rho = t.sample_grid(&inv);
                let s = 1.0 / rho;
                let gz = lift.ray_z(qx, qy);
                // z = s·g(q) + t_z,  s = 1/ρ(q)
                let [drx, dry] = t.gradient_grid(&inv);
                let ds = [-s * s * drx, -s * s * dry];
                let dzdq = [ds[0] * gz + s * lift.m[0], ds[1] * gz + s * lift.m[1]];
                let [cx, cy] = *self.dcoords.get(x, y);
                *grad_target.get_mut(x, y) += g * (dzdq[0] * cx + dzdq[1] * cy);
                let dz_drho = -s * s * gz;
                for (tx, ty, wt) in t.weighted() {
                    if wt == 0.0 {
                        continue;
                    }
                    let d = *source_depth.values.get(tx, ty);
                    *grad_source.get_mut(tx, ty) += g * dz_drho * wt * (-1.0 / (d * d));
                }
            }
        }
    }
}

fn inverse_depth(depth: &DepthMap) -> Grid<f64> {
    Grid::from_fn(depth.width(), depth.height(), |x, y| {
        if *depth.valid.get(x, y) {
            1.0 / *depth.values.get(x, y)
        } else {
            0.0
        }
    })
}

/// Target-frame z of a source pixel lifted to depth `s`: `z = s·(m·[q;1]) + t_z`.
struct DepthLift {
    m: [f64; 3],
    t_z: f64,
}

impl DepthLift {
    fn new(source: &Camera, target: &Camera) -> Self {
        let rel = RelativePose::between(source, target);
        let kinv = source.intrinsics_inverse();
        // ray(q) = K⁻¹[q;1] / (K⁻¹[q;1])_z and the z-row of K⁻¹ is [0, 0, 1/k22].
        let scale = source.intrinsics[(2, 2)];
        let row = rel.rotation.row(2) * kinv * scale;
        DepthLift {
            m: [row[0], row[1], row[2]],
            t_z: rel.translation.z,
        }
    }

    #[inline]
    fn ray_z(&self, qx: f64, qy: f64) -> f64 {
        self.m[0] * qx + self.m[1] * qy + self.m[2]
    }
}

/// Inverse-warps `source`'s image into `target` using `target_depth`.
pub fn synthesize_view(
    target_depth: &DepthMap,
    source: &CameraView,
    target: &CameraView,
) -> Result<(Image, Grid<bool>)> {
    check_depth_shape(target_depth, &target.image)?;
    let warp = DepthWarp::new(
        target_depth,
        &target.camera,
        &source.camera,
        source.width(),
        source.height(),
    );
    Ok(warp.sample(&source.image, None))
}

/// Source depth re-expressed in the target camera (`D'_{src→tgt}`).
pub fn warp_depth(
    source_depth: &DepthMap,
    target_depth: &DepthMap,
    source: &Camera,
    target: &Camera,
) -> Result<DepthMap> {
    if !source_depth.values.same_shape(&target_depth.values) {
        return Err(Error::shape(
            format!("{}x{}", source_depth.width(), source_depth.height()),
            format!("{}x{}", target_depth.width(), target_depth.height()),
        ));
    }
    let warp = DepthWarp::new(
        target_depth,
        target,
        source,
        source_depth.width(),
        source_depth.height(),
    );
    Ok(warp.warp_depth(source_depth, source, target))
}

fn check_depth_shape(depth: &DepthMap, image: &Image) -> Result<()> {
    if depth.width() != image.width() || depth.height() != image.height() {
        return Err(Error::shape(
            format!("{}x{}", image.width(), image.height()),
            format!("{}x{}", depth.width(), depth.height()),
        ));
    }
    Ok(())
}

//! Deterministic synthetic scenes made of textured planes, rendered with exact
//! depth and pairwise visibility.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraView, DepthHypotheses, DepthMap, Grid, Image};

/// Surface appearance of a primitive.
#[derive(Debug, Clone, PartialEq)]
pub enum Texture {
    /// Smooth multi-octave value noise; `scale` is the coarse lattice spacing in world units.
    Noise { scale: f64 },
    /// Uniform gray.
    Flat { value: f64 },
}

/// Plane `normal · x = offset` (world frame), optionally clipped to an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanePrimitive {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub texture: Texture,
    pub clip_min: Option<Vector3<f64>>,
    pub clip_max: Option<Vector3<f64>>,
}

impl PlanePrimitive {
    pub fn new(normal: Vector3<f64>, offset: f64, texture: Texture) -> Self {
        let n = normal.norm();
        PlanePrimitive {
            normal: normal / n,
            offset: offset / n,
            texture,
            clip_min: None,
            clip_max: None,
        }
    }

    pub fn clipped(mut self, min: Vector3<f64>, max: Vector3<f64>) -> Self {
        self.clip_min = Some(min);
        self.clip_max = Some(max);
        self
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        let lo = self
            .clip_min
            .is_none_or(|m| p.x >= m.x && p.y >= m.y && p.z >= m.z);
        let hi = self
            .clip_max
            .is_none_or(|m| p.x <= m.x && p.y <= m.y && p.z <= m.z);
        lo && hi
    }

    /// Ray parameter of the intersection with `origin + t·dir`, if any with `t > 0`.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom == 0.0 {
            return None;
        }
        let t = (self.offset - self.normal.dot(origin)) / denom;
        if !(t > 0.0 && t.is_finite()) {
            return None;
        }
        self.contains(&(origin + dir * t)).then_some(t)
    }
}

/// Everything needed to render a scene. Primitives earlier in the list win depth ties.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub primitives: Vec<PlanePrimitive>,
    pub cameras: Vec<Camera>,
}

/// Rendered views plus analytic ground truth.
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub views: Vec<CameraView>,
    pub gt_depths: Vec<DepthMap>,
    /// `(i, j)` → pixels of view `i` whose surface point is also seen by view `j`.
    pub visibility: BTreeMap<(usize, usize), Grid<bool>>,
    /// Index of the primitive hit at each pixel of each view.
    pub hit_primitive: Vec<Grid<Option<usize>>>,
}

const CHANNELS: usize = 3;
const LATTICE: usize = 256;
/// Texture contrast around mid-gray.
const TEXTURE_AMPLITUDE: f64 = 0.25;

/// Seeded 3-D value noise with Catmull-Rom interpolation. Unlike smoothstep
/// fades, the interpolant keeps a non-zero slope at lattice nodes.
#[derive(Debug, Clone)]
struct ValueNoise {
    perm: Vec<usize>,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut perm: Vec<usize> = (0..LATTICE).collect();
        for i in (1..LATTICE).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let values = (0..LATTICE).map(|_| rng.random_range(-1.0..1.0)).collect();
        ValueNoise { perm, values }
    }

    #[inline]
    fn lattice_value(&self, x: i64, y: i64, z: i64) -> f64 {
        let m = LATTICE as i64;
        let h = self.perm[x.rem_euclid(m) as usize];
        let h = self.perm[(h as i64 + y).rem_euclid(m) as usize];
        let h = self.perm[(h as i64 + z).rem_euclid(m) as usize];
        self.values[h]
    }

    fn eval(&self, p: Vector3<f64>) -> f64 {
        let fl = p.map(f64::floor);
        let (ix, iy, iz) = (fl.x as i64, fl.y as i64, fl.z as i64);
        let f = p - fl;
        let (wx, wy, wz) = (catmull_rom(f.x), catmull_rom(f.y), catmull_rom(f.z));
        let mut acc = 0.0;
        for (dz, &az) in wz.iter().enumerate() {
            for (dy, &ay) in wy.iter().enumerate() {
                let mut row = 0.0;
                for (dx, &ax) in wx.iter().enumerate() {
                    row += ax
                        * self.lattice_value(ix + dx as i64 - 1, iy + dy as i64 - 1, iz + dz as i64 - 1);
                }
                acc += az * ay * row;
            }
        }
        acc
    }
}

/// Catmull-Rom weights for the four nodes around fractional offset `t`.
#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// A noise octave sampled in a randomly rotated and shifted frame.
#[derive(Debug, Clone)]
struct Octave {
    noise: ValueNoise,
    rotation: Matrix3<f64>,
    shift: Vector3<f64>,
}

impl Octave {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let noise = ValueNoise::new(rng);
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let rotation = *nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis + Vector3::new(0.0, 0.0, 1e-3)),
            angle,
        )
        .matrix();
        let shift = Vector3::new(
            rng.random_range(0.0..64.0),
            rng.random_range(0.0..64.0),
            rng.random_range(0.0..64.0),
        );
        Octave {
            noise,
            rotation,
            shift,
        }
    }

    fn eval(&self, p: Vector3<f64>) -> f64 {
        self.noise.eval(self.rotation * p + self.shift)
    }
}

/// Per-primitive octaves: two shared luminance octaves and one tint octave per channel.
struct Shader {
    octaves: Vec<Vec<Octave>>,
}

impl Shader {
    fn new(spec: &SceneSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Shader {
            octaves: spec
                .primitives
                .iter()
                .map(|_| (0..2 + CHANNELS).map(|_| Octave::new(&mut rng)).collect())
                .collect(),
        }
    }

    fn shade(&self, prim_index: usize, prim: &PlanePrimitive, p: &Vector3<f64>, out: &mut [f64]) {
        match prim.texture {
            Texture::Flat { value } => out.fill(value),
            Texture::Noise { scale } => {
                let oct = &self.octaves[prim_index];
                let q = p / scale;
                let base = oct[0].eval(q) + 0.5 * oct[1].eval(q * 2.0);
                for (c, v) in out.iter_mut().enumerate() {
                    let tint = 0.25 * oct[2 + c].eval(q);
                    *v = (0.5 + TEXTURE_AMPLITUDE * (base + tint)).clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// Nearest primitive along a world ray: `(primitive index, ray parameter)`.
fn cast(prims: &[PlanePrimitive], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in prims.iter().enumerate() {
        if let Some(t) = p.intersect(origin, dir) {
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((i, t));
            }
        }
    }
    best
}

/// Renders every camera of `spec`.
pub fn render_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    if spec.primitives.is_empty() {
        return Err(Error::InvalidArgument("scene needs at least one primitive".into()));
    }
    if spec.width < 2 || spec.height < 2 {
        return Err(Error::InvalidArgument("image must be at least 2x2".into()));
    }
    let shader = Shader::new(spec);
    let (w, h) = (spec.width, spec.height);
    let mut views = Vec::with_capacity(spec.cameras.len());
    let mut depths = Vec::with_capacity(spec.cameras.len());
    let mut hits = Vec::with_capacity(spec.cameras.len());
    let mut points: Vec<Grid<Option<Vector3<f64>>>> = Vec::new();
    for cam in &spec.cameras {
        cam.validate()?;
        let kinv = cam.intrinsics_inverse();
        let rt = cam.rotation.transpose();
        let origin = cam.center();
        let mut image = Image::new(w, h, CHANNELS);
        let mut depth = DepthMap::invalid(w, h);
        let mut hit = Grid::new(w, h, None);
        let mut pts = Grid::new(w, h, None);
        for y in 0..h {
            for x in 0..w {
                let ray = kinv * Vector3::new(x as f64, y as f64, 1.0);
                let ray = ray / ray.z;
                let dir = rt * ray;
                if let Some((pi, t)) = cast(&spec.primitives, &origin, &dir) {
                    let p = origin + dir * t;
                    shader.shade(pi, &spec.primitives[pi], &p, image.pixel_mut(x, y));
                    // The camera-frame ray has unit z, so the ray parameter is the depth.
                    *depth.values.get_mut(x, y) = t;
                    *depth.valid.get_mut(x, y) = true;
                    *hit.get_mut(x, y) = Some(pi);
                    *pts.get_mut(x, y) = Some(p);
                }
            }
        }
        views.push(CameraView::new(cam.clone(), image)?);
        depths.push(depth);
        hits.push(hit);
        points.push(pts);
    }

    let mut visibility = BTreeMap::new();
    for i in 0..spec.cameras.len() {
        for j in 0..spec.cameras.len() {
            let cj = &spec.cameras[j];
            let origin = cj.center();
            let vis = Grid::from_fn(w, h, |x, y| {
                let Some(p) = points[i].get(x, y) else {
                    return false;
                };
                if i == j {
                    return true;
                }
                let Some([u, v]) = cj.project(&cj.world_to_camera(p)) else {
                    return false;
                };
                if u < 0.0 || v < 0.0 || u > (w - 1) as f64 || v > (h - 1) as f64 {
                    return false;
                }
                let seg = p - origin;
                match cast(&spec.primitives, &origin, &seg) {
                    Some((_, s)) => s >= 1.0 - 1e-9,
                    None => true,
                }
            });
            visibility.insert((i, j), vis);
        }
    }

    Ok(RenderedScene {
        views,
        gt_depths: depths,
        visibility,
        hit_primitive: hits,
    })
}

/// Ready-made scenes used by tests, the acceptance suite and the CLI examples.
pub mod presets {
    use super::*;

    pub const WIDTH: usize = 64;
    pub const HEIGHT: usize = 48;
    pub const FOCAL: f64 = 160.0;
    /// Depth of the main fronto-parallel plane.
    pub const PLANE_DEPTH: f64 = 100.0;
    /// Hypothesis spacing used with the preset rigs.
    pub const SPACING: f64 = 1.5;
    pub const HYP_COUNT: usize = 64;
    /// Index of [`PLANE_DEPTH`] among the preset hypotheses.
    pub const PLANE_INDEX: usize = 32;
    /// Lateral offset of the outer cameras.
    pub const BASELINE: f64 = 30.0;
    pub const TEXTURE_SCALE: f64 = 8.0;

    pub fn intrinsics(width: usize, height: usize, focal: f64) -> Matrix3<f64> {
        Matrix3::new(
            focal,
            0.0,
            (width as f64 - 1.0) / 2.0,
            0.0,
            focal,
            (height as f64 - 1.0) / 2.0,
            0.0,
            0.0,
            1.0,
        )
    }

    /// The preset depth range: `HYP_COUNT` samples with the plane on sample `PLANE_INDEX`.
    pub fn hypotheses() -> DepthHypotheses {
        let d_min = PLANE_DEPTH - PLANE_INDEX as f64 * SPACING;
        DepthHypotheses::from_interval(d_min, SPACING, HYP_COUNT).expect("preset range is valid")
    }

    /// Camera centers along x; view 0 is the central camera, the others
    /// alternate right/left and all look at the plane center.
    pub fn converging_rig(n_views: usize, width: usize, height: usize, focal: f64) -> Vec<Camera> {
        let k = intrinsics(width, height, focal);
        let target = Vector3::new(0.0, 0.0, PLANE_DEPTH);
        (0..n_views)
            .map(|i| {
                let x = match i {
                    0 => 0.0,
                    _ => {
                        let ring = i.div_ceil(2) as f64;
                        if i % 2 == 1 {
                            BASELINE * ring
                        } else {
                            -BASELINE * ring
                        }
                    }
                };
                // A small vertical offset on the outer cameras keeps epipolar
                // lines off the image rows.
                let y = if i == 0 { 0.0 } else { 4.0 * (i as f64) };
                Camera::look_at(k, Vector3::new(x, y, 0.0), target, Vector3::new(0.0, -1.0, 0.0))
                    .expect("preset camera is valid")
            })
            .collect()
    }

    /// Cameras translated along x, all looking down +z (no rotation).
    pub fn parallel_rig(offsets: &[f64], width: usize, height: usize, focal: f64) -> Vec<Camera> {
        let k = intrinsics(width, height, focal);
        offsets
            .iter()
            .map(|&x| {
                Camera::new(k, Matrix3::identity(), Vector3::new(-x, 0.0, 0.0))
                    .expect("preset camera is valid")
            })
            .collect()
    }

    pub fn plane(depth: f64) -> PlanePrimitive {
        PlanePrimitive::new(
            Vector3::new(0.0, 0.0, 1.0),
            depth,
            Texture::Noise {
                scale: TEXTURE_SCALE,
            },
        )
    }

    /// Textured plane `z = PLANE_DEPTH` seen by a converging rig.
    pub fn plane_scene(n_views: usize) -> SceneSpec {
        SceneSpec {
            width: WIDTH,
            height: HEIGHT,
            seed: 7,
            primitives: vec![plane(PLANE_DEPTH)],
            cameras: converging_rig(n_views, WIDTH, HEIGHT, FOCAL),
        }
    }

    /// Depth of the occluding plane in [`occluder_scene`].
    pub const OCCLUDER_DEPTH: f64 = 60.0;

    /// Background plane plus a nearer plane covering `x < 0`, which hides part
    /// of the background from the side cameras.
    pub fn occluder_scene(n_views: usize, width: usize, height: usize) -> SceneSpec {
        let focal = FOCAL * width as f64 / WIDTH as f64;
        let inf = f64::INFINITY;
        let occluder = PlanePrimitive::new(
            Vector3::new(0.0, 0.0, 1.0),
            OCCLUDER_DEPTH,
            Texture::Noise {
                scale: TEXTURE_SCALE * 0.6,
            },
        )
        .clipped(Vector3::new(-inf, -inf, -inf), Vector3::new(0.0, inf, inf));
        SceneSpec {
            width,
            height,
            seed: 11,
            primitives: vec![occluder, plane(PLANE_DEPTH)],
            cameras: converging_rig(n_views, width, height, focal),
        }
    }
}

//! TOML scene descriptions and flat run configurations.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, DepthHypotheses};
use crate::photometry::LossWeights;
use crate::scenegen::{PlanePrimitive, SceneSpec, Texture};
use crate::solver::SolverConfig;
use crate::volume::SmoothRadius;

/// Hypothesis count used when neither the bundle nor the run config sets one.
pub const DEFAULT_HYP_COUNT: usize = 64;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn toml_err(path: &Path, e: toml::de::Error) -> Error {
    Error::Config(format!("{}: {}", path.display(), e.message().trim()))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    /// Shorthand for `fx = fy = focal`.
    pub focal: Option<f64>,
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    /// Principal point; defaults to the image center.
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    /// Either `center` + `look_at` (+ optional `up`) or `rotation` + `translation`.
    pub center: Option<[f64; 3]>,
    pub look_at: Option<[f64; 3]>,
    pub up: Option<[f64; 3]>,
    pub rotation: Option<[[f64; 3]; 3]>,
    pub translation: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub normal: [f64; 3],
    pub offset: f64,
    /// `noise` (default) or `flat`.
    #[serde(default = "default_texture")]
    pub texture: String,
    /// Lattice spacing of `noise`.
    pub scale: Option<f64>,
    /// Gray level of `flat`.
    pub value: Option<f64>,
    pub clip_min: Option<[f64; 3]>,
    pub clip_max: Option<[f64; 3]>,
}

fn default_texture() -> String {
    "noise".into()
}

/// A renderable scene plus the depth range written into its camera files.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub seed: u64,
    pub depth_min: f64,
    pub depth_interval: f64,
    pub hyp_count: Option<usize>,
    #[serde(rename = "camera")]
    pub cameras: Vec<CameraConfig>,
    #[serde(rename = "plane")]
    pub planes: Vec<PlaneConfig>,
}

impl CameraConfig {
    fn build(&self, index: usize, width: usize, height: usize) -> Result<Camera> {
        let bad = |m: &str| Error::Config(format!("camera {index}: {m}"));
        let fx = self.fx.or(self.focal).ok_or_else(|| bad("needs `focal` or `fx`"))?;
        let fy = self.fy.or(self.focal).unwrap_or(fx);
        let cx = self.cx.unwrap_or((width as f64 - 1.0) / 2.0);
        let cy = self.cy.unwrap_or((height as f64 - 1.0) / 2.0);
        let k = Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0);
        match (self.center, self.look_at, self.rotation, self.translation) {
            (Some(c), Some(t), None, None) => {
                let up = self.up.unwrap_or([0.0, -1.0, 0.0]);
                Camera::look_at(k, c.into(), t.into(), up.into())
            }
            (None, None, Some(r), Some(t)) => {
                Camera::new(k, Matrix3::from_fn(|i, j| r[i][j]), Vector3::from(t))
            }
            _ => Err(bad(
                "give either `center` and `look_at`, or `rotation` and `translation`",
            )),
        }
    }
}

impl PlaneConfig {
    fn build(&self, index: usize) -> Result<PlanePrimitive> {
        let bad = |m: String| Error::Config(format!("plane {index}: {m}"));
        let texture = match self.texture.as_str() {
            "noise" => Texture::Noise {
                scale: self.scale.unwrap_or(crate::scenegen::presets::TEXTURE_SCALE),
            },
            "flat" => Texture::Flat {
                value: self.value.unwrap_or(0.5),
            },
            other => return Err(bad(format!("unknown texture `{other}`"))),
        };
        let normal = Vector3::from(self.normal);
        if !(normal.norm() > 0.0) {
            return Err(bad("normal must be non-zero".into()));
        }
        let plane = PlanePrimitive::new(normal, self.offset, texture);
        let inf = f64::INFINITY;
        Ok(match (self.clip_min, self.clip_max) {
            (None, None) => plane,
            (lo, hi) => plane.clipped(
                lo.map_or(Vector3::repeat(-inf), Vector3::from),
                hi.map_or(Vector3::repeat(inf), Vector3::from),
            ),
        })
    }
}

impl SceneConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| toml_err(path, e))?;
        if cfg.cameras.is_empty() || cfg.planes.is_empty() {
            return Err(Error::Config(format!(
                "{}: need at least one [[camera]] and one [[plane]]",
                path.display()
            )));
        }
        if !(cfg.depth_min > 0.0 && cfg.depth_interval > 0.0) {
            return Err(Error::Config(format!(
                "{}: depth_min and depth_interval must be positive",
                path.display()
            )));
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        SceneConfig::parse(&read_text(path)?, path)
    }

    pub fn to_spec(&self) -> Result<SceneSpec> {
        let cameras = self
            .cameras
            .iter()
            .enumerate()
            .map(|(i, c)| c.build(i, self.width, self.height))
            .collect::<Result<_>>()?;
        let primitives = self
            .planes
            .iter()
            .enumerate()
            .map(|(i, p)| p.build(i))
            .collect::<Result<_>>()?;
        Ok(SceneSpec {
            width: self.width,
            height: self.height,
            seed: self.seed,
            primitives,
            cameras,
        })
    }
}

/// Optional overrides of solver and loss settings. Keys mirror the fields of
/// [`SolverConfig`] and [`LossWeights`]; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyp_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_height: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_outer_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_steps_per_mask_update: Option<usize>,
    /// Absolute depth units; defaults to half a hypothesis spacing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_search_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_halvings: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub armijo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda6: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_occ: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),+) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )+
    };
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_err(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        RunConfig::parse(&read_text(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// `self` with every key set in `top` replaced.
    pub fn overlaid(mut self, top: &RunConfig) -> RunConfig {
        overlay!(
            self, top, hyp_count, temperature, feature_mode, smooth_depth, smooth_height,
            smooth_width, max_outer_iters, inner_steps_per_mask_update, step_size,
            line_search_factor, max_halvings, armijo, convergence_tol, omega_u, omega_s,
            lambda1, lambda2, lambda3, lambda4, lambda5, lambda6, alpha1, alpha2, tau_occ
        );
        self
    }

    pub fn hyp_count(&self) -> usize {
        self.hyp_count.unwrap_or(DEFAULT_HYP_COUNT)
    }

    pub fn weights(&self) -> LossWeights {
        let d = LossWeights::default();
        LossWeights {
            omega_u: self.omega_u.unwrap_or(d.omega_u),
            omega_s: self.omega_s.unwrap_or(d.omega_s),
            lambda1: self.lambda1.unwrap_or(d.lambda1),
            lambda2: self.lambda2.unwrap_or(d.lambda2),
            lambda3: self.lambda3.unwrap_or(d.lambda3),
            lambda4: self.lambda4.unwrap_or(d.lambda4),
            lambda5: self.lambda5.unwrap_or(d.lambda5),
            lambda6: self.lambda6.unwrap_or(d.lambda6),
            alpha1: self.alpha1.unwrap_or(d.alpha1),
            alpha2: self.alpha2.unwrap_or(d.alpha2),
            tau_occ: self.tau_occ.unwrap_or(d.tau_occ),
        }
    }

    /// Solver settings for `hypotheses`, defaults filled in, validated.
    pub fn solver_config(&self, hypotheses: DepthHypotheses) -> Result<SolverConfig> {
        let mut c = SolverConfig::new(hypotheses);
        if let Some(v) = &self.feature_mode {
            c.feature_mode = v.parse()?;
        }
        let r = c.smooth_radius;
        c.smooth_radius = SmoothRadius::new(
            self.smooth_depth.unwrap_or(r.depth),
            self.smooth_height.unwrap_or(r.height),
            self.smooth_width.unwrap_or(r.width),
        );
        c.temperature = self.temperature.unwrap_or(c.temperature);
        c.max_outer_iters = self.max_outer_iters.unwrap_or(c.max_outer_iters);
        c.inner_steps_per_mask_update = self
            .inner_steps_per_mask_update
            .unwrap_or(c.inner_steps_per_mask_update);
        c.step_size = self.step_size.unwrap_or(c.step_size);
        c.line_search.factor = self.line_search_factor.unwrap_or(c.line_search.factor);
        c.line_search.max_halvings = self.max_halvings.unwrap_or(c.line_search.max_halvings);
        c.line_search.armijo = self.armijo.unwrap_or(c.line_search.armijo);
        c.convergence_tol = self.convergence_tol.unwrap_or(c.convergence_tol);
        c.weights = self.weights();
        c.validate()?;
        Ok(c)
    }
}

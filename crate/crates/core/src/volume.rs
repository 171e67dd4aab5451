//! Plane-sweep cost volumes: fixed features, variance aggregation over views,
//! separable box smoothing and softmax expected-depth regression.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{
    apply_homography, plane_homography, CameraView, DepthHypotheses, DepthMap, Grid, Image, Taps,
};

/// Which fixed feature stack to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    /// Channel-mean intensity (F = 1).
    Intensity,
    /// Intensity plus forward-difference x and y gradients (F = 3).
    #[default]
    Grad3,
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intensity" => Ok(FeatureMode::Intensity),
            "grad3" => Ok(FeatureMode::Grad3),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::Intensity => "intensity",
            FeatureMode::Grad3 => "grad3",
        })
    }
}

/// `H × W × F` feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub values: Image,
}

impl FeatureMap {
    pub fn channels(&self) -> usize {
        self.values.channels()
    }
}

pub fn extract_features(image: &Image, mode: FeatureMode) -> FeatureMap {
    let gray = image.luminance();
    let (w, h) = (image.width(), image.height());
    let values = match mode {
        FeatureMode::Intensity => Image::from_fn(w, h, 1, |x, y, _| *gray.get(x, y)),
        FeatureMode::Grad3 => Image::from_fn(w, h, 3, |x, y, c| match c {
            0 => *gray.get(x, y),
            1 if x + 1 < w => gray.get(x + 1, y) - gray.get(x, y),
            2 if y + 1 < h => gray.get(x, y + 1) - gray.get(x, y),
            _ => 0.0,
        }),
    };
    FeatureMap { values }
}

/// `D × H × W` matching cost for one reference view (lower is better).
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub ref_view: usize,
    pub hypotheses: DepthHypotheses,
    width: usize,
    height: usize,
    cost: Vec<f64>,
    support: Vec<u32>,
}

impl CostVolume {
    /// Wraps raw slices laid out as `[d][y][x]`.
    pub fn from_parts(
        ref_view: usize,
        hypotheses: DepthHypotheses,
        width: usize,
        height: usize,
        cost: Vec<f64>,
        support: Vec<u32>,
    ) -> Result<Self> {
        let n = hypotheses.count() * width * height;
        if cost.len() != n || support.len() != n {
            return Err(Error::shape(n, cost.len().max(support.len())));
        }
        Ok(CostVolume {
            ref_view,
            hypotheses,
            width,
            height,
            cost,
            support,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth_count(&self) -> usize {
        self.hypotheses.count()
    }

    #[inline]
    pub fn offset(&self, d: usize, x: usize, y: usize) -> usize {
        (d * self.height + y) * self.width + x
    }

    #[inline]
    pub fn cost(&self, d: usize, x: usize, y: usize) -> f64 {
        self.cost[self.offset(d, x, y)]
    }

    #[inline]
    pub fn support(&self, d: usize, x: usize, y: usize) -> u32 {
        self.support[self.offset(d, x, y)]
    }

    /// An entry is usable only when at least two views contributed.
    #[inline]
    pub fn is_valid(&self, d: usize, x: usize, y: usize) -> bool {
        self.support(d, x, y) >= 2
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn costs_mut(&mut self) -> &mut [f64] {
        &mut self.cost
    }

    /// Index of the lowest valid cost at a pixel.
    pub fn argmin(&self, x: usize, y: usize) -> Option<usize> {
        (0..self.depth_count())
            .filter(|&d| self.is_valid(d, x, y))
            .min_by(|&a, &b| self.cost(a, x, y).total_cmp(&self.cost(b, x, y)))
    }
}

/// Per-hypothesis variance of reference and warped source features.
///
/// Each non-reference feature map is warped into the reference view through the
/// fronto-parallel plane homography; the reference features join the group
/// unwarped. Cost is the channel mean of the population variance over the
/// contributing views.
pub fn build_cost_volume(
    views: &[CameraView],
    features: &[FeatureMap],
    ref_view: usize,
    hypotheses: &DepthHypotheses,
) -> Result<CostVolume> {
    if views.len() < 2 {
        return Err(Error::TooFewViews(views.len()));
    }
    if features.len() != views.len() {
        return Err(Error::shape(views.len(), features.len()));
    }
    if ref_view >= views.len() {
        return Err(Error::InvalidArgument(format!(
            "reference view {ref_view} out of range"
        )));
    }
    let f0 = &features[ref_view].values;
    for f in features {
        if !f.values.same_shape(f0) {
            return Err(Error::shape(f0.shape_str(), f.values.shape_str()));
        }
    }
    let (w, h, nc) = (f0.width(), f0.height(), f0.channels());
    let n_views = views.len();
    let depth_count = hypotheses.count();
    let mut cost = vec![f64::NAN; depth_count * w * h];
    let mut support = vec![0u32; depth_count * w * h];

    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n_views); nc];
    let mut homographies = Vec::with_capacity(n_views);
    for (di, &d) in hypotheses.samples().iter().enumerate() {
        homographies.clear();
        for (j, v) in views.iter().enumerate() {
            if j == ref_view {
                continue;
            }
            homographies.push((j, plane_homography(&views[ref_view].camera, &v.camera, d)?));
        }
        for y in 0..h {
            for x in 0..w {
                for (c, s) in samples.iter_mut().enumerate() {
                    s.clear();
                    s.push(f0.get(x, y, c));
                }
                for (j, hm) in &homographies {
                    let Some([sx, sy]) = apply_homography(hm, x as f64, y as f64) else {
                        continue;
                    };
                    let Some(t) = Taps::locate(sx, sy, w, h) else {
                        continue;
                    };
                    for (c, s) in samples.iter_mut().enumerate() {
                        s.push(t.sample_channel(&features[*j].values, c));
                    }
                }
                let n = samples[0].len();
                let idx = (di * h + y) * w + x;
                support[idx] = n as u32;
                if n >= 2 {
                    let total: f64 = samples.iter_mut().map(|s| population_variance(s)).sum();
                    cost[idx] = total / nc as f64;
                }
            }
        }
    }
    CostVolume::from_parts(ref_view, hypotheses.clone(), w, h, cost, support)
}

/// Population variance, computed on sorted values so the result does not
/// depend on the order views were supplied in.
fn population_variance(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    dev.iter().sum::<f64>() / n
}

/// Box radii along depth, height and width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SmoothRadius {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl SmoothRadius {
    pub fn new(depth: usize, height: usize, width: usize) -> Self {
        SmoothRadius {
            depth,
            height,
            width,
        }
    }
}

/// Separable box filter over valid entries, renormalized by the number of
/// valid entries in each window. Invalid entries stay invalid.
pub fn smooth_cost_volume(vol: &CostVolume, radius: SmoothRadius) -> CostVolume {
    let (w, h, dc) = (vol.width, vol.height, vol.depth_count());
    let mask: Vec<f64> = vol
        .support
        .iter()
        .map(|&s| if s >= 2 { 1.0 } else { 0.0 })
        .collect();
    let mut num: Vec<f64> = vol
        .cost
        .iter()
        .zip(&mask)
        .map(|(&c, &m)| if m > 0.0 { c } else { 0.0 })
        .collect();
    let mut den = mask.clone();
    let dims = [dc, h, w];
    let strides = [h * w, w, 1];
    let radii = [radius.depth, radius.height, radius.width];
    for axis in 0..3 {
        if radii[axis] == 0 {
            continue;
        }
        num = box_pass(&num, dims, strides, axis, radii[axis]);
        den = box_pass(&den, dims, strides, axis, radii[axis]);
    }
    let cost = (0..num.len())
        .map(|i| {
            if mask[i] > 0.0 {
                num[i] / den[i]
            } else {
                f64::NAN
            }
        })
        .collect();
    CostVolume {
        ref_view: vol.ref_view,
        hypotheses: vol.hypotheses.clone(),
        width: w,
        height: h,
        cost,
        support: vol.support.clone(),
    }
}

fn box_pass(src: &[f64], dims: [usize; 3], strides: [usize; 3], axis: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let n = dims[axis];
    let stride = strides[axis];
    // Iterate over every line parallel to `axis`.
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    for i in 0..dims[others[0]] {
        for j in 0..dims[others[1]] {
            let base = i * strides[others[0]] + j * strides[others[1]];
            for k in 0..n {
                let lo = k.saturating_sub(r);
                let hi = (k + r).min(n - 1);
                let mut acc = 0.0;
                for m in lo..=hi {
                    acc += src[base + m * stride];
                }
                out[base + k * stride] = acc;
            }
        }
    }
    out
}

/// Per-pixel softmax over hypotheses (`D × H × W`, `[d][y][x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    pub width: usize,
    pub height: usize,
    pub depth_count: usize,
    pub prob: Vec<f64>,
}

impl ProbabilityVolume {
    pub fn prob(&self, d: usize, x: usize, y: usize) -> f64 {
        self.prob[(d * self.height + y) * self.width + x]
    }
}

/// Softmax expected depth: `depth = Σ_d sample_d · softmax(−cost/temperature)_d`
/// over the valid hypotheses of each pixel.
pub fn regress_depth(vol: &CostVolume, temperature: f64) -> Result<(DepthMap, ProbabilityVolume)> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let (w, h, dc) = (vol.width, vol.height, vol.depth_count());
    let samples = vol.hypotheses.samples();
    let mut prob = vec![0.0; dc * w * h];
    let mut values = Grid::new(w, h, 0.0);
    let mut valid = Grid::new(w, h, false);
    let mut logits = vec![0.0; dc];
    for y in 0..h {
        for x in 0..w {
            let mut best = f64::NEG_INFINITY;
            let mut any = false;
            for (d, l) in logits.iter_mut().enumerate() {
                if vol.is_valid(d, x, y) && vol.cost(d, x, y).is_finite() {
                    *l = -vol.cost(d, x, y) / temperature;
                    best = best.max(*l);
                    any = true;
                } else {
                    *l = f64::NEG_INFINITY;
                }
            }
            if !any {
                continue;
            }
            let mut z = 0.0;
            for l in logits.iter_mut() {
                *l = if l.is_finite() { (*l - best).exp() } else { 0.0 };
                z += *l;
            }
            let mut depth = 0.0;
            for (d, &e) in logits.iter().enumerate() {
                let p = e / z;
                prob[(d * h + y) * w + x] = p;
                depth += samples[d] * p;
            }
            *values.get_mut(x, y) = vol.hypotheses.clamp(depth);
            *valid.get_mut(x, y) = true;
        }
    }
    let depth = DepthMap::with_validity(values, valid)?;
    Ok((
        depth,
        ProbabilityVolume {
            width: w,
            height: h,
            depth_count: dc,
            prob,
        },
    ))
}

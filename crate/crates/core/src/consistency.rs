//! Cross-view occlusion masks, the image, depth and brightness consistency
//! losses, and the full symmetric objective with its gradient.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{check_views, Camera, CameraView, DepthMap, DepthWarp, Grid, Image};
use crate::photometry::{
    charbonnier, charbonnier_derivative, compare_images, smoothness_backward, smoothness_loss,
    LossWeights,
};
use crate::reduce::sorted_sum;

/// Pixels of view `i` that survive the round-trip depth check against view `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    pub pair: (usize, usize),
    pub valid: Grid<bool>,
    pub valid_count: usize,
}

impl OcclusionMask {
    pub fn new(pair: (usize, usize), valid: Grid<bool>) -> Self {
        let valid_count = valid.count_true();
        OcclusionMask {
            pair,
            valid,
            valid_count,
        }
    }
}

/// Occlusion masks keyed by ordered view pair.
pub type MaskSet = BTreeMap<(usize, usize), OcclusionMask>;

/// Second-order depth `D''_{j→i}`: `D_i` carried into view `j`, then back into `i`.
pub fn round_trip_depth(
    d_i: &DepthMap,
    d_j: &DepthMap,
    cam_i: &Camera,
    cam_j: &Camera,
) -> Result<DepthMap> {
    let there = crate::geometry::warp_depth(d_i, d_j, cam_i, cam_j)?;
    crate::geometry::warp_depth(&there, d_i, cam_j, cam_i)
}

/// Marks pixel `p` of view `i` valid iff `|D_i(p) − D''_{j→i}(p)| ≤ tau` and
/// both hops were defined.
pub fn occlusion_mask(
    d_i: &DepthMap,
    d_j: &DepthMap,
    view_i: &CameraView,
    view_j: &CameraView,
    tau: f64,
) -> Result<OcclusionMask> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "occlusion threshold must be positive, got {tau}"
        )));
    }
    let back = round_trip_depth(d_i, d_j, &view_i.camera, &view_j.camera)?;
    let valid = Grid::from_fn(d_i.width(), d_i.height(), |x, y| {
        match (d_i.depth(x, y), back.depth(x, y)) {
            (Some(a), Some(b)) => (a - b).abs() <= tau,
            _ => false,
        }
    });
    Ok(OcclusionMask::new((0, 0), valid))
}

/// Masks for every ordered pair of distinct views.
pub fn occlusion_masks(views: &[CameraView], depths: &[DepthMap], tau: f64) -> Result<MaskSet> {
    check_problem(views, depths)?;
    let mut masks = MaskSet::new();
    for i in 0..views.len() {
        for j in 0..views.len() {
            if i == j {
                continue;
            }
            let mut m = occlusion_mask(&depths[i], &depths[j], &views[i], &views[j], tau)?;
            m.pair = (i, j);
            masks.insert((i, j), m);
        }
    }
    Ok(masks)
}

fn check_problem(views: &[CameraView], depths: &[DepthMap]) -> Result<()> {
    if views.len() < 2 {
        return Err(Error::TooFewViews(views.len()));
    }
    check_views(views)?;
    if depths.len() != views.len() {
        return Err(Error::shape(
            format!("{} depth maps", views.len()),
            format!("{} depth maps", depths.len()),
        ));
    }
    let (w, h) = (views[0].width(), views[0].height());
    for d in depths {
        if d.width() != w || d.height() != h {
            return Err(Error::shape(
                format!("{w}x{h}"),
                format!("{}x{}", d.width(), d.height()),
            ));
        }
    }
    Ok(())
}

/// Every recorded term of the objective. `None` marks a term skipped for an empty mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub unary: BTreeMap<(usize, usize), Option<f64>>,
    pub smoothness: Vec<f64>,
    pub image_consistency: BTreeMap<(usize, usize), Option<f64>>,
    pub depth_consistency: BTreeMap<(usize, usize), Option<f64>>,
    pub brightness: BTreeMap<(usize, usize, usize), Option<f64>>,
    /// Per unordered pair `i < j`.
    pub synthesis: BTreeMap<(usize, usize), f64>,
    /// Per unordered pair `i < j`: weighted image and depth consistency.
    pub pair_consistency: BTreeMap<(usize, usize), f64>,
    /// Pair consistency plus all brightness terms.
    pub consistency: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn assemble(
        w: &LossWeights,
        unary: BTreeMap<(usize, usize), Option<f64>>,
        smoothness: Vec<f64>,
        image_consistency: BTreeMap<(usize, usize), Option<f64>>,
        depth_consistency: BTreeMap<(usize, usize), Option<f64>>,
        brightness: BTreeMap<(usize, usize, usize), Option<f64>>,
    ) -> Self {
        let v = smoothness.len();
        let get = |m: &BTreeMap<(usize, usize), Option<f64>>, k| m[&k].unwrap_or(0.0);
        let mut synthesis = BTreeMap::new();
        let mut pair_consistency = BTreeMap::new();
        for i in 0..v {
            for j in i + 1..v {
                let lu = get(&unary, (i, j)) + get(&unary, (j, i));
                let ls = smoothness[i] + smoothness[j];
                synthesis.insert((i, j), w.omega_u * lu + w.omega_s * 0.5 * ls);
                let lm = get(&image_consistency, (i, j)) + get(&image_consistency, (j, i));
                let ld = get(&depth_consistency, (i, j)) + get(&depth_consistency, (j, i));
                pair_consistency.insert((i, j), w.lambda5 * lm + w.lambda6 * ld);
            }
        }
        let mut parts: Vec<f64> = pair_consistency.values().copied().collect();
        parts.extend(brightness.values().map(|b| b.unwrap_or(0.0)));
        let consistency = sorted_sum(&mut parts);
        let mut all: Vec<f64> = synthesis.values().copied().collect();
        all.extend(parts);
        let total = sorted_sum(&mut all);
        LossBreakdown {
            unary,
            smoothness,
            image_consistency,
            depth_consistency,
            brightness,
            synthesis,
            pair_consistency,
            consistency,
            total,
        }
    }

    /// Total recomputed from the recorded pair and triple aggregates.
    pub fn recomputed_total(&self) -> f64 {
        let mut all: Vec<f64> = self.synthesis.values().copied().collect();
        all.extend(self.pair_consistency.values().copied());
        all.extend(self.brightness.values().map(|b| b.unwrap_or(0.0)));
        sorted_sum(&mut all)
    }

    /// Number of skipped (empty-mask) terms.
    pub fn skipped(&self) -> usize {
        let pairs = self
            .unary
            .values()
            .chain(self.image_consistency.values())
            .chain(self.depth_consistency.values())
            .filter(|v| v.is_none())
            .count();
        pairs + self.brightness.values().filter(|v| v.is_none()).count()
    }

    /// Flat `key value` report, one term per line.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let fmt = |v: &Option<f64>| match v {
            Some(x) => format!("{x:e}"),
            None => "skipped".to_string(),
        };
        for ((i, j), v) in &self.unary {
            let _ = writeln!(out, "Lu_{i}_{j} {}", fmt(v));
        }
        for (i, v) in self.smoothness.iter().enumerate() {
            let _ = writeln!(out, "Ls_{i} {v:e}");
        }
        for ((i, j), v) in &self.image_consistency {
            let _ = writeln!(out, "Lm_{i}_{j} {}", fmt(v));
        }
        for ((i, j), v) in &self.depth_consistency {
            let _ = writeln!(out, "Ld_{i}_{j} {}", fmt(v));
        }
        for ((i, j, k), v) in &self.brightness {
            let _ = writeln!(out, "Lb_{i}_{j}_{k} {}", fmt(v));
        }
        let _ = writeln!(out, "total {:e}", self.total);
        out
    }

    fn sum_of<K>(m: &BTreeMap<K, Option<f64>>) -> f64 {
        let mut v: Vec<f64> = m.values().map(|x| x.unwrap_or(0.0)).collect();
        sorted_sum(&mut v)
    }

    /// Summed unary, smoothness, image, depth and brightness terms (unweighted).
    pub fn family_sums(&self) -> [f64; 5] {
        let mut ls = self.smoothness.clone();
        [
            Self::sum_of(&self.unary),
            sorted_sum(&mut ls),
            Self::sum_of(&self.image_consistency),
            Self::sum_of(&self.depth_consistency),
            Self::sum_of(&self.brightness),
        ]
    }
}

/// Warp of view `i`'s pixels into view `j` and the images it produces.
struct PairImages {
    warp: DepthWarp,
    /// `I_j` synthesized into view `i`.
    first: Image,
    first_valid: Grid<bool>,
    /// `I_i` carried into `j` and back into `i`.
    second: Image,
    second_valid: Grid<bool>,
}

/// Per-view gradient contributions, reduced with an order-independent sum.
struct GradientSink {
    width: usize,
    height: usize,
    parts: Vec<Vec<Grid<f64>>>,
}

impl GradientSink {
    fn new(views: usize, width: usize, height: usize) -> Self {
        GradientSink {
            width,
            height,
            parts: vec![Vec::new(); views],
        }
    }

    fn blank(&self) -> Grid<f64> {
        Grid::new(self.width, self.height, 0.0)
    }

    fn push(&mut self, view: usize, g: Grid<f64>) {
        if g.as_slice().iter().any(|&v| v != 0.0) {
            self.parts[view].push(g);
        }
    }

    fn finish(self) -> Vec<Grid<f64>> {
        let (w, h) = (self.width, self.height);
        self.parts
            .into_iter()
            .map(|parts| {
                let mut buf = Vec::with_capacity(parts.len());
                Grid::from_fn(w, h, |x, y| {
                    buf.clear();
                    buf.extend(parts.iter().map(|g| *g.get(x, y)));
                    sorted_sum(&mut buf)
                })
            })
            .collect()
    }
}

/// All views, depths and masks of one objective evaluation, with the warped
/// images shared between terms.
pub struct LossContext<'a> {
    views: &'a [CameraView],
    depths: &'a [DepthMap],
    masks: &'a MaskSet,
    weights: LossWeights,
    pairs: BTreeMap<(usize, usize), PairImages>,
}

impl<'a> LossContext<'a> {
    pub fn new(
        views: &'a [CameraView],
        depths: &'a [DepthMap],
        masks: &'a MaskSet,
        weights: &LossWeights,
    ) -> Result<Self> {
        check_problem(views, depths)?;
        weights.validate()?;
        let v = views.len();
        let (w, h) = (views[0].width(), views[0].height());
        for i in 0..v {
            for j in 0..v {
                if i == j {
                    continue;
                }
                let m = masks.get(&(i, j)).ok_or_else(|| {
                    Error::InvalidArgument(format!("no occlusion mask for pair ({i}, {j})"))
                })?;
                if m.valid.width() != w || m.valid.height() != h {
                    return Err(Error::shape(
                        format!("{w}x{h}"),
                        format!("{}x{}", m.valid.width(), m.valid.height()),
                    ));
                }
            }
        }
        let mut firsts = BTreeMap::new();
        for i in 0..v {
            for j in 0..v {
                if i == j {
                    continue;
                }
                let warp = DepthWarp::new(&depths[i], &views[i].camera, &views[j].camera, w, h);
                let (first, first_valid) = warp.sample(&views[j].image, None);
                firsts.insert((i, j), (warp, first, first_valid));
            }
        }
        let mut pairs = BTreeMap::new();
        for (&(i, j), (warp, _, _)) in &firsts {
            let (_, back, back_valid) = &firsts[&(j, i)];
            let (second, second_valid) = warp.sample(back, Some(back_valid));
            pairs.insert((i, j), (second, second_valid));
        }
        let pairs = firsts
            .into_iter()
            .map(|(k, (warp, first, first_valid))| {
                let (second, second_valid) = pairs.remove(&k).expect("pair present");
                (
                    k,
                    PairImages {
                        warp,
                        first,
                        first_valid,
                        second,
                        second_valid,
                    },
                )
            })
            .collect();
        Ok(LossContext {
            views,
            depths,
            masks,
            weights: *weights,
            pairs,
        })
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    fn mask(&self, i: usize, j: usize) -> &Grid<bool> {
        &self.masks[&(i, j)].valid
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        let v = self.views.len();
        if i >= v || j >= v {
            return Err(Error::InvalidArgument(format!(
                "view pair ({i}, {j}) out of range for {v} views"
            )));
        }
        if i == j {
            return Err(Error::PreconditionViolation(format!(
                "pair ({i}, {j}) repeats a view"
            )));
        }
        Ok(())
    }

    fn skip_empty(r: Result<f64>, what: &str) -> Result<Option<f64>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::EmptyMask) => {
                log::warn!("{what} skipped: empty mask");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn unary_mask(&self, i: usize, j: usize) -> Grid<bool> {
        self.mask(i, j).and(&self.pairs[&(i, j)].first_valid)
    }

    /// `L_u^{i,j}`: view `i` against view `j` synthesized into it.
    pub fn unary(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        let p = &self.pairs[&(i, j)];
        let m = self.unary_mask(i, j);
        Ok(compare_images(&self.views[i].image, &p.first, &m, &self.weights, false)?
            .0
            .total())
    }

    pub fn smoothness(&self, i: usize) -> Result<f64> {
        smoothness_loss(&self.views[i].image, &self.depths[i], &self.weights)
    }

    fn image_mask(&self, i: usize, j: usize) -> Grid<bool> {
        self.mask(j, i).and(&self.pairs[&(j, i)].second_valid)
    }

    /// `L_m^{i,j}`: `I_j` against its second-order synthesis `I''_{i→j}`.
    pub fn image_consistency(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        let p = &self.pairs[&(j, i)];
        let m = self.image_mask(i, j);
        Ok(compare_images(&self.views[j].image, &p.second, &m, &self.weights, false)?
            .0
            .total())
    }

    fn depth_terms(&self, i: usize, j: usize) -> (DepthMap, Grid<bool>) {
        let p = &self.pairs[&(i, j)];
        let warped = p.warp.warp_depth(
            &self.depths[j],
            &self.views[j].camera,
            &self.views[i].camera,
        );
        let m = self
            .mask(i, j)
            .and(&warped.valid)
            .and(&self.depths[i].valid);
        (warped, m)
    }

    /// `L_d^{i,j}`: mean Charbonnier gap between `D_i` and `D_j` expressed in view `i`.
    pub fn depth_consistency(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        let (warped, m) = self.depth_terms(i, j);
        let n = m.count_true();
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        let di = &self.depths[i].values;
        let mut sum = 0.0;
        for (idx, &ok) in m.as_slice().iter().enumerate() {
            if ok {
                sum += charbonnier(di.as_slice()[idx] - warped.values.as_slice()[idx]);
            }
        }
        Ok(sum / n as f64)
    }

    fn brightness_mask(&self, i: usize, j: usize, k: usize) -> Grid<bool> {
        self.mask(i, j)
            .and(self.mask(i, k))
            .and(&self.pairs[&(i, j)].second_valid)
            .and(&self.pairs[&(i, k)].second_valid)
    }

    /// `L_b^{i,j,k}`: the round trips of `I_i` through `j` and through `k` compared in view `i`.
    pub fn brightness_consistency(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        self.check_pair(i, k)?;
        if j == k {
            return Err(Error::PreconditionViolation(format!(
                "brightness term ({i}, {j}, {k}) repeats a view"
            )));
        }
        let m = self.brightness_mask(i, j, k);
        let a = &self.pairs[&(i, j)].second;
        let b = &self.pairs[&(i, k)].second;
        Ok(compare_images(a, b, &m, &self.weights, false)?.0.total())
    }

    /// Every term of the objective.
    pub fn breakdown(&self) -> Result<LossBreakdown> {
        let v = self.views.len();
        let w = &self.weights;
        let mut unary = BTreeMap::new();
        let mut image = BTreeMap::new();
        let mut depth = BTreeMap::new();
        let mut brightness = BTreeMap::new();
        for i in 0..v {
            for j in 0..v {
                if i == j {
                    continue;
                }
                let lu = if w.omega_u != 0.0 {
                    Self::skip_empty(self.unary(i, j), "unary term")?
                } else {
                    Some(0.0)
                };
                unary.insert((i, j), lu);
                let lm = if w.lambda5 != 0.0 {
                    Self::skip_empty(self.image_consistency(i, j), "image consistency term")?
                } else {
                    Some(0.0)
                };
                image.insert((i, j), lm);
                let ld = if w.lambda6 != 0.0 {
                    Self::skip_empty(self.depth_consistency(i, j), "depth consistency term")?
                } else {
                    Some(0.0)
                };
                depth.insert((i, j), ld);
            }
        }
        for (i, j, k) in brightness_triples(v) {
            brightness.insert(
                (i, j, k),
                Self::skip_empty(
                    self.brightness_consistency(i, j, k),
                    "brightness consistency term",
                )?,
            );
        }
        let smoothness = (0..v)
            .map(|i| {
                if w.omega_s != 0.0 {
                    self.smoothness(i)
                } else {
                    Ok(0.0)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let b = LossBreakdown::assemble(w, unary, smoothness, image, depth, brightness);
        if !b.total.is_finite() {
            return Err(Error::NonFiniteResult("total loss".into()));
        }
        Ok(b)
    }

    /// Gradient of the total loss with respect to every depth pixel, masks held fixed.
    /// The census term contributes nothing; invalid pixels get zero.
    pub fn gradient(&self) -> Result<Vec<Grid<f64>>> {
        let v = self.views.len();
        let w = &self.weights;
        let (width, height) = (self.views[0].width(), self.views[0].height());
        let mut sink = GradientSink::new(v, width, height);
        let mut gw = *w;
        gw.lambda4 = 0.0;

        for i in 0..v {
            for j in 0..v {
                if i == j {
                    continue;
                }
                if w.omega_u != 0.0 {
                    self.unary_backward(i, j, &gw, &mut sink)?;
                }
                if w.lambda5 != 0.0 {
                    self.image_backward(i, j, &gw, &mut sink)?;
                }
                if w.lambda6 != 0.0 {
                    self.depth_backward(i, j, &mut sink)?;
                }
            }
        }
        for (i, j, k) in brightness_triples(v) {
            self.brightness_backward(i, j, k, &gw, &mut sink)?;
        }
        if w.omega_s != 0.0 {
            // each view's prior appears in v − 1 pairs with weight ω_s / 2
            let scale = w.omega_s * 0.5 * (v - 1) as f64;
            for i in 0..v {
                let mut g = sink.blank();
                smoothness_backward(&self.views[i].image, &self.depths[i], w, scale, &mut g)?;
                sink.push(i, g);
            }
        }
        let grads = sink.finish();
        if grads
            .iter()
            .any(|g| g.as_slice().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteResult("loss gradient".into()));
        }
        Ok(grads)
    }

    /// Pushes a gradient on `first[i][j]` back onto `D_i`.
    fn first_backward(&self, i: usize, j: usize, g_first: &Image, sink: &mut GradientSink) {
        let mut g = sink.blank();
        self.pairs[&(i, j)]
            .warp
            .sample_backward(&self.views[j].image, g_first, &mut g, None);
        sink.push(i, g);
    }

    /// Pushes a gradient on `second[i][j]` back onto `D_i` and `D_j`.
    fn second_backward(&self, i: usize, j: usize, g_second: &Image, sink: &mut GradientSink) {
        let p = &self.pairs[&(i, j)];
        let back = &self.pairs[&(j, i)];
        let mut g = sink.blank();
        let mut g_first = Image::new(g_second.width(), g_second.height(), g_second.channels());
        p.warp
            .sample_backward(&back.first, g_second, &mut g, Some(&mut g_first));
        sink.push(i, g);
        self.first_backward(j, i, &g_first, sink);
    }

    fn unary_backward(
        &self,
        i: usize,
        j: usize,
        w: &LossWeights,
        sink: &mut GradientSink,
    ) -> Result<()> {
        let m = self.unary_mask(i, j);
        if m.count_true() == 0 {
            return Ok(());
        }
        let p = &self.pairs[&(i, j)];
        let (_, g) = compare_images(&self.views[i].image, &p.first, &m, w, true)?;
        let g = scaled(g.expect("gradient requested").synthesized, w.omega_u);
        self.first_backward(i, j, &g, sink);
        Ok(())
    }

    fn image_backward(
        &self,
        i: usize,
        j: usize,
        w: &LossWeights,
        sink: &mut GradientSink,
    ) -> Result<()> {
        let m = self.image_mask(i, j);
        if m.count_true() == 0 {
            return Ok(());
        }
        let p = &self.pairs[&(j, i)];
        let (_, g) = compare_images(&self.views[j].image, &p.second, &m, w, true)?;
        let g = scaled(g.expect("gradient requested").synthesized, w.lambda5);
        self.second_backward(j, i, &g, sink);
        Ok(())
    }

    fn depth_backward(&self, i: usize, j: usize, sink: &mut GradientSink) -> Result<()> {
        let (warped, m) = self.depth_terms(i, j);
        let n = m.count_true();
        if n == 0 {
            return Ok(());
        }
        let scale = self.weights.lambda6 / n as f64;
        let mut g_i = sink.blank();
        let mut g_warped = sink.blank();
        for y in 0..m.height() {
            for x in 0..m.width() {
                if *m.get(x, y) {
                    let r = *self.depths[i].values.get(x, y) - *warped.values.get(x, y);
                    let d = scale * charbonnier_derivative(r);
                    *g_i.get_mut(x, y) += d;
                    *g_warped.get_mut(x, y) = -d;
                }
            }
        }
        let mut g_j = sink.blank();
        self.pairs[&(i, j)].warp.warp_depth_backward(
            &self.depths[j],
            &self.views[j].camera,
            &self.views[i].camera,
            &g_warped,
            &mut g_i,
            &mut g_j,
        );
        sink.push(i, g_i);
        sink.push(j, g_j);
        Ok(())
    }

    fn brightness_backward(
        &self,
        i: usize,
        j: usize,
        k: usize,
        w: &LossWeights,
        sink: &mut GradientSink,
    ) -> Result<()> {
        let m = self.brightness_mask(i, j, k);
        if m.count_true() == 0 {
            return Ok(());
        }
        let a = &self.pairs[&(i, j)].second;
        let b = &self.pairs[&(i, k)].second;
        let (_, g) = compare_images(a, b, &m, w, true)?;
        let g = g.expect("gradient requested");
        self.second_backward(i, j, &g.reference, sink);
        self.second_backward(i, k, &g.synthesized, sink);
        Ok(())
    }
}

fn scaled(mut img: Image, s: f64) -> Image {
    img.as_mut_slice().iter_mut().for_each(|v| *v *= s);
    img
}

/// The brightness-term index set: for every view `i`, each unordered pair
/// `{j, k}` of the other views, listed with `j < k`.
pub fn brightness_triples(v: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..v {
        for j in 0..v {
            for k in j + 1..v {
                if j != i && k != i {
                    out.push((i, j, k));
                }
            }
        }
    }
    out
}

/// Evaluates the full objective.
pub fn total_loss(
    views: &[CameraView],
    depths: &[DepthMap],
    masks: &MaskSet,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    LossContext::new(views, depths, masks, weights)?.breakdown()
}

/// `L_m^{i,j}` for one ordered pair.
pub fn image_consistency_loss(
    i: usize,
    j: usize,
    views: &[CameraView],
    depths: &[DepthMap],
    masks: &MaskSet,
    weights: &LossWeights,
) -> Result<f64> {
    LossContext::new(views, depths, masks, weights)?.image_consistency(i, j)
}

/// `L_d^{i,j}` for one ordered pair.
pub fn depth_consistency_loss(
    i: usize,
    j: usize,
    views: &[CameraView],
    depths: &[DepthMap],
    masks: &MaskSet,
    weights: &LossWeights,
) -> Result<f64> {
    LossContext::new(views, depths, masks, weights)?.depth_consistency(i, j)
}

/// `L_b^{i,j,k}` for one triple.
pub fn brightness_consistency_loss(
    i: usize,
    j: usize,
    k: usize,
    views: &[CameraView],
    depths: &[DepthMap],
    masks: &MaskSet,
    weights: &LossWeights,
) -> Result<f64> {
    LossContext::new(views, depths, masks, weights)?.brightness_consistency(i, j, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{presets, render_scene};

    fn full_masks(v: usize, w: usize, h: usize) -> MaskSet {
        let mut m = MaskSet::new();
        for i in 0..v {
            for j in 0..v {
                if i != j {
                    m.insert((i, j), OcclusionMask::new((i, j), Grid::new(w, h, true)));
                }
            }
        }
        m
    }

    #[test]
    fn triple_counts() {
        assert_eq!(brightness_triples(2).len(), 0);
        assert_eq!(brightness_triples(3).len(), 3);
        assert_eq!(brightness_triples(4).len(), 12);
    }

    #[test]
    fn self_mask_is_full() {
        let r = render_scene(&presets::plane_scene(2)).unwrap();
        let m = occlusion_mask(&r.gt_depths[0], &r.gt_depths[0], &r.views[0], &r.views[0], 5.0)
            .unwrap();
        assert_eq!(m.valid_count, presets::WIDTH * presets::HEIGHT);
    }

    #[test]
    fn identical_views_sit_at_the_floor() {
        let r = render_scene(&presets::plane_scene(1)).unwrap();
        let views = vec![r.views[0].clone(); 3];
        let depths = vec![r.gt_depths[0].clone(); 3];
        let masks = full_masks(3, presets::WIDTH, presets::HEIGHT);
        let ctx = LossContext::new(&views, &depths, &masks, &LossWeights::default()).unwrap();
        assert!((ctx.image_consistency(0, 1).unwrap() - 0.0015).abs() < 1e-12);
        assert!((ctx.brightness_consistency(0, 1, 2).unwrap() - 0.0015).abs() < 1e-12);
        assert!((ctx.depth_consistency(1, 2).unwrap() - 0.001).abs() < 1e-15);
        assert!(matches!(
            ctx.brightness_consistency(0, 1, 1),
            Err(Error::PreconditionViolation(_))
        ));
    }

    #[test]
    fn zero_weights_zero_total_and_gradient() {
        let r = render_scene(&presets::plane_scene(3)).unwrap();
        let masks = occlusion_masks(&r.views, &r.gt_depths, 5.0).unwrap();
        let w = LossWeights::zero();
        let ctx = LossContext::new(&r.views, &r.gt_depths, &masks, &w).unwrap();
        let b = ctx.breakdown().unwrap();
        // brightness terms carry no weight of their own; with every λ zero they vanish too
        assert_eq!(b.total, 0.0);
        for g in ctx.gradient().unwrap() {
            assert!(g.as_slice().iter().all(|&v| v == 0.0));
        }
    }
}

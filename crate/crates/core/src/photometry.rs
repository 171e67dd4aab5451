//! Photometric comparison of a reference image against a synthesized one, the
//! edge-aware depth smoothness prior and the pairwise synthesis loss.
//!
//! The comparator and the smoothness prior both expose adjoints so that the
//! solver can differentiate the full objective with masks held fixed.

use crate::error::{Error, Result};
use crate::geometry::{synthesize_view, CameraView, DepthMap, Grid, Image};

/// Charbonnier stabilizer `ε²`.
const CHARBONNIER_EPS2: f64 = 1e-6;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
/// Census window used by the comparator.
pub const CENSUS_WINDOW: usize = 3;

/// Weights of every loss term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub omega_u: f64,
    pub omega_s: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub lambda6: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Occlusion threshold, in depth units.
    pub tau_occ: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            omega_u: 0.8,
            omega_s: 0.1,
            lambda1: 0.5,
            lambda2: 0.8,
            lambda3: 0.5,
            lambda4: 0.2,
            lambda5: 0.3,
            lambda6: 0.3,
            alpha1: 0.5,
            alpha2: 0.5,
            tau_occ: 5.0,
        }
    }
}

impl LossWeights {
    /// All weights zero; `tau_occ` keeps its default.
    pub fn zero() -> Self {
        LossWeights {
            omega_u: 0.0,
            omega_s: 0.0,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            lambda5: 0.0,
            lambda6: 0.0,
            ..LossWeights::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("omega_u", self.omega_u),
            ("omega_s", self.omega_s),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("lambda5", self.lambda5),
            ("lambda6", self.lambda6),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "weight {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.tau_occ.is_finite() && self.tau_occ > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tau_occ must be positive, got {}",
                self.tau_occ
            )));
        }
        Ok(())
    }
}

/// `φ(s) = sqrt(s² + 10⁻⁶)`.
#[inline]
pub fn charbonnier(s: f64) -> f64 {
    (s * s + CHARBONNIER_EPS2).sqrt()
}

/// `φ′(s)`.
#[inline]
pub fn charbonnier_derivative(s: f64) -> f64 {
    s / charbonnier(s)
}

pub fn charbonnier_grid(g: &Grid<f64>) -> Grid<f64> {
    g.map(|&s| charbonnier(s))
}

/// Per-pixel census bits, packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusDescriptor {
    width: usize,
    height: usize,
    bit_len: usize,
    words: usize,
    bits: Vec<u64>,
}

impl CensusDescriptor {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    /// Bit `k` of pixel `(x, y)`; bits enumerate window neighbours row by row, skipping the center.
    pub fn bit(&self, x: usize, y: usize, k: usize) -> bool {
        let base = (y * self.width + x) * self.words;
        self.bits[base + k / 64] >> (k % 64) & 1 == 1
    }

    fn pixel_words(&self, idx: usize) -> &[u64] {
        &self.bits[idx * self.words..(idx + 1) * self.words]
    }
}

/// Census transform of a grayscale image. A bit is set when the neighbour is
/// darker than the center; neighbours outside the image leave their bit clear.
pub fn census_transform(image: &Grid<f64>, window: usize) -> Result<CensusDescriptor> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::BadWindow(window));
    }
    let (w, h) = (image.width(), image.height());
    let r = (window / 2) as isize;
    let bit_len = window * window - 1;
    let words = bit_len.div_ceil(64);
    let mut bits = vec![0u64; w * h * words];
    for y in 0..h {
        for x in 0..w {
            let center = *image.get(x, y);
            let base = (y * w + x) * words;
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx >= 0
                        && ny >= 0
                        && (nx as usize) < w
                        && (ny as usize) < h
                        && *image.get(nx as usize, ny as usize) < center
                    {
                        bits[base + k / 64] |= 1 << (k % 64);
                    }
                    k += 1;
                }
            }
        }
    }
    Ok(CensusDescriptor {
        width: w,
        height: h,
        bit_len,
        words,
        bits,
    })
}

/// Normalized Hamming distance per pixel.
pub fn census_distance(a: &CensusDescriptor, b: &CensusDescriptor) -> Result<Grid<f64>> {
    if a.width != b.width || a.height != b.height || a.bit_len != b.bit_len {
        return Err(Error::shape(
            format!("{}x{}:{}", a.width, a.height, a.bit_len),
            format!("{}x{}:{}", b.width, b.height, b.bit_len),
        ));
    }
    let n = a.bit_len as f64;
    Ok(Grid::from_fn(a.width, a.height, |x, y| {
        let idx = y * a.width + x;
        let diff: u32 = a
            .pixel_words(idx)
            .iter()
            .zip(b.pixel_words(idx))
            .map(|(p, q)| (p ^ q).count_ones())
            .sum();
        diff as f64 / n
    }))
}

fn check_images(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::shape(a.shape_str(), b.shape_str()));
    }
    Ok(())
}

fn check_mask(image: &Image, mask: &Grid<bool>) -> Result<()> {
    if mask.width() != image.width() || mask.height() != image.height() {
        return Err(Error::shape(
            format!("{}x{}", image.width(), image.height()),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    Ok(())
}

/// Window statistics of one channel over the masked 3×3 neighbourhood of a pixel.
struct SsimStats {
    n: f64,
    mu_a: f64,
    mu_b: f64,
    var_a: f64,
    var_b: f64,
    cov: f64,
}

impl SsimStats {
    fn index(&self) -> f64 {
        let (num, den) = self.quotient();
        num / den
    }

    fn quotient(&self) -> (f64, f64) {
        let a1 = 2.0 * self.mu_a * self.mu_b + SSIM_C1;
        let a2 = 2.0 * self.cov + SSIM_C2;
        let b1 = self.mu_a * self.mu_a + self.mu_b * self.mu_b + SSIM_C1;
        let b2 = self.var_a + self.var_b + SSIM_C2;
        (a1 * a2, b1 * b2)
    }

    /// `∂S/∂(μ_a, σ_a², σ_ab)`; swap the roles of `a` and `b` for the other side.
    fn partials(&self, mu_self: f64, mu_other: f64) -> [f64; 3] {
        let a1 = 2.0 * self.mu_a * self.mu_b + SSIM_C1;
        let a2 = 2.0 * self.cov + SSIM_C2;
        let b1 = self.mu_a * self.mu_a + self.mu_b * self.mu_b + SSIM_C1;
        let b2 = self.var_a + self.var_b + SSIM_C2;
        let s = (a1 * a2) / (b1 * b2);
        [
            2.0 * mu_other * a2 / (b1 * b2) - s * 2.0 * mu_self / b1,
            -s / b2,
            2.0 * a1 / (b1 * b2),
        ]
    }
}

fn ssim_window(
    a: &Image,
    b: &Image,
    mask: &Grid<bool>,
    x: usize,
    y: usize,
    c: usize,
    taps: &mut Vec<(usize, usize)>,
) -> SsimStats {
    let (w, h) = (a.width(), a.height());
    taps.clear();
    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
            if *mask.get(nx, ny) {
                taps.push((nx, ny));
            }
        }
    }
    let n = taps.len() as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for &(nx, ny) in taps.iter() {
        sa += a.get(nx, ny, c);
        sb += b.get(nx, ny, c);
    }
    let (mu_a, mu_b) = (sa / n, sb / n);
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for &(nx, ny) in taps.iter() {
        let da = a.get(nx, ny, c) - mu_a;
        let db = b.get(nx, ny, c) - mu_b;
        vaa += da * da;
        vbb += db * db;
        vab += da * db;
    }
    SsimStats {
        n,
        mu_a,
        mu_b,
        var_a: vaa / n,
        var_b: vbb / n,
        cov: vab / n,
    }
}

/// Channel-averaged SSIM with a 3×3 uniform window clipped to the image.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Grid<f64>> {
    check_images(a, b)?;
    let mask = Grid::new(a.width(), a.height(), true);
    let mut taps = Vec::with_capacity(9);
    let nc = a.channels() as f64;
    Ok(Grid::from_fn(a.width(), a.height(), |x, y| {
        (0..a.channels())
            .map(|c| ssim_window(a, b, &mask, x, y, c, &mut taps).index())
            .sum::<f64>()
            / nc
    }))
}

/// Per-term validity and value of one comparator evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UnaryTerms {
    pub l1: f64,
    pub gradient: f64,
    pub ssim: f64,
    pub census: f64,
}

impl UnaryTerms {
    pub fn total(&self) -> f64 {
        self.l1 + self.gradient + self.ssim + self.census
    }
}

/// Gradients of the comparator with respect to both compared images.
#[derive(Debug, Clone)]
pub struct UnaryGradient {
    pub reference: Image,
    pub synthesized: Image,
}

#[inline]
fn forward_diff(img: &Image, x: usize, y: usize, c: usize) -> [f64; 2] {
    let v = img.get(x, y, c);
    let gx = if x + 1 < img.width() {
        img.get(x + 1, y, c) - v
    } else {
        0.0
    };
    let gy = if y + 1 < img.height() {
        img.get(x, y + 1, c) - v
    } else {
        0.0
    };
    [gx, gy]
}

/// Pixels where both forward differences only touch mask pixels.
fn gradient_valid(mask: &Grid<bool>) -> Grid<bool> {
    let (w, h) = (mask.width(), mask.height());
    Grid::from_fn(w, h, |x, y| {
        *mask.get(x, y)
            && (x + 1 == w || *mask.get(x + 1, y))
            && (y + 1 == h || *mask.get(x, y + 1))
    })
}

/// Pixels whose whole in-image census window lies inside the mask.
fn census_valid(mask: &Grid<bool>, window: usize) -> Grid<bool> {
    let (w, h) = (mask.width(), mask.height());
    let r = window / 2;
    Grid::from_fn(w, h, |x, y| {
        if !*mask.get(x, y) {
            return false;
        }
        for ny in y.saturating_sub(r)..=(y + r).min(h - 1) {
            for nx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                if !*mask.get(nx, ny) {
                    return false;
                }
            }
        }
        true
    })
}

/// The masked photometric comparator, optionally with its adjoint.
///
/// Each term is averaged over its own valid pixels: the mask for the L1 and
/// SSIM terms, mask pixels whose forward neighbours are also masked for the
/// gradient term, and mask pixels with a fully masked window for census.
/// The comparator is symmetric in its two images.
pub fn compare_images(
    a: &Image,
    b: &Image,
    mask: &Grid<bool>,
    w: &LossWeights,
    with_gradient: bool,
) -> Result<(UnaryTerms, Option<UnaryGradient>)> {
    check_images(a, b)?;
    check_mask(a, mask)?;
    let count = mask.count_true();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let (width, height, nch) = (a.width(), a.height(), a.channels());
    let nc = nch as f64;
    let mut terms = UnaryTerms::default();
    let mut grad = with_gradient.then(|| UnaryGradient {
        reference: Image::new(width, height, nch),
        synthesized: Image::new(width, height, nch),
    });

    if w.lambda1 != 0.0 {
        let scale = w.lambda1 / (nc * count as f64);
        let mut sum = 0.0;
        for y in 0..height {
            for x in 0..width {
                if !*mask.get(x, y) {
                    continue;
                }
                for c in 0..nch {
                    let r = a.get(x, y, c) - b.get(x, y, c);
                    sum += charbonnier(r);
                    if let Some(g) = grad.as_mut() {
                        let d = scale * charbonnier_derivative(r);
                        g.reference.pixel_mut(x, y)[c] += d;
                        g.synthesized.pixel_mut(x, y)[c] -= d;
                    }
                }
            }
        }
        terms.l1 = scale * sum;
    }

    if w.lambda2 != 0.0 {
        let valid = gradient_valid(mask);
        let n = valid.count_true();
        if n > 0 {
            let scale = w.lambda2 / (nc * n as f64);
            let mut sum = 0.0;
            for y in 0..height {
                for x in 0..width {
                    if !*valid.get(x, y) {
                        continue;
                    }
                    for c in 0..nch {
                        let [ax, ay] = forward_diff(a, x, y, c);
                        let [bx, by] = forward_diff(b, x, y, c);
                        let (rx, ry) = (ax - bx, ay - by);
                        let phi = (rx * rx + ry * ry + CHARBONNIER_EPS2).sqrt();
                        sum += phi;
                        if let Some(g) = grad.as_mut() {
                            let (gx, gy) = (scale * rx / phi, scale * ry / phi);
                            for (img, sign) in
                                [(&mut g.reference, 1.0), (&mut g.synthesized, -1.0)]
                            {
                                if x + 1 < width {
                                    img.pixel_mut(x + 1, y)[c] += sign * gx;
                                    img.pixel_mut(x, y)[c] -= sign * gx;
                                }
                                if y + 1 < height {
                                    img.pixel_mut(x, y + 1)[c] += sign * gy;
                                    img.pixel_mut(x, y)[c] -= sign * gy;
                                }
                            }
                        }
                    }
                }
            }
            terms.gradient = scale * sum;
        }
    }

    if w.lambda3 != 0.0 {
        let scale = w.lambda3 / (2.0 * nc * count as f64);
        let mut sum = 0.0;
        let mut taps = Vec::with_capacity(9);
        for y in 0..height {
            for x in 0..width {
                if !*mask.get(x, y) {
                    continue;
                }
                for c in 0..nch {
                    let st = ssim_window(a, b, mask, x, y, c, &mut taps);
                    sum += 1.0 - st.index();
                    if let Some(g) = grad.as_mut() {
                        // loss = scale·(1 − S)
                        let pa = st.partials(st.mu_a, st.mu_b);
                        let pb = st.partials(st.mu_b, st.mu_a);
                        for &(nx, ny) in &taps {
                            let da = a.get(nx, ny, c) - st.mu_a;
                            let db = b.get(nx, ny, c) - st.mu_b;
                            let ga = (pa[0] + pa[1] * 2.0 * da + pa[2] * db) / st.n;
                            let gb = (pb[0] + pb[1] * 2.0 * db + pb[2] * da) / st.n;
                            g.reference.pixel_mut(nx, ny)[c] -= scale * ga;
                            g.synthesized.pixel_mut(nx, ny)[c] -= scale * gb;
                        }
                    }
                }
            }
        }
        terms.ssim = scale * sum;
    }

    if w.lambda4 != 0.0 {
        let valid = census_valid(mask, CENSUS_WINDOW);
        let n = valid.count_true();
        if n > 0 {
            let ca = census_transform(&a.luminance(), CENSUS_WINDOW)?;
            let cb = census_transform(&b.luminance(), CENSUS_WINDOW)?;
            let dist = census_distance(&ca, &cb)?;
            let mut sum = 0.0;
            for (&d, &v) in dist.as_slice().iter().zip(valid.as_slice()) {
                if v {
                    sum += charbonnier(d);
                }
            }
            terms.census = w.lambda4 * sum / n as f64;
        }
    }

    Ok((terms, grad))
}

/// Masked unary loss between a reference image and a synthesized one.
pub fn unary_loss(
    i_ref: &Image,
    i_syn: &Image,
    mask: &Grid<bool>,
    w: &LossWeights,
) -> Result<f64> {
    Ok(compare_images(i_ref, i_syn, mask, w, false)?.0.total())
}

fn check_depth(image: &Image, depth: &DepthMap) -> Result<()> {
    if depth.width() != image.width() || depth.height() != image.height() {
        return Err(Error::shape(
            format!("{}x{}", image.width(), image.height()),
            format!("{}x{}", depth.width(), depth.height()),
        ));
    }
    Ok(())
}

/// Edge-aware weights `e^{−α1|∇I|}` and `e^{−α2|∇²I|}` (zero where the Laplacian is undefined).
fn smoothness_weights(image: &Image, w: &LossWeights) -> (Grid<f64>, Grid<f64>) {
    let (width, height, nch) = (image.width(), image.height(), image.channels());
    let nc = nch as f64;
    let first = Grid::from_fn(width, height, |x, y| {
        let g: f64 = (0..nch)
            .map(|c| {
                let [gx, gy] = forward_diff(image, x, y, c);
                gx.abs() + gy.abs()
            })
            .sum::<f64>()
            / nc;
        (-w.alpha1 * g).exp()
    });
    let second = Grid::from_fn(width, height, |x, y| {
        if !interior(x, y, width, height) {
            return 0.0;
        }
        let l: f64 = (0..nch)
            .map(|c| {
                (image.get(x - 1, y, c)
                    + image.get(x + 1, y, c)
                    + image.get(x, y - 1, c)
                    + image.get(x, y + 1, c)
                    - 4.0 * image.get(x, y, c))
                .abs()
            })
            .sum::<f64>()
            / nc;
        (-w.alpha2 * l).exp()
    });
    (first, second)
}

#[inline]
fn interior(x: usize, y: usize, w: usize, h: usize) -> bool {
    x > 0 && y > 0 && x + 1 < w && y + 1 < h
}

/// Forward differences of `D` at `(x, y)`; a component is 0 at the right or
/// bottom border or when its neighbour is invalid.
#[inline]
fn depth_diff(d: &DepthMap, x: usize, y: usize) -> [f64; 2] {
    let v = *d.values.get(x, y);
    let (w, h) = (d.width(), d.height());
    let gx = if x + 1 < w && *d.valid.get(x + 1, y) {
        *d.values.get(x + 1, y) - v
    } else {
        0.0
    };
    let gy = if y + 1 < h && *d.valid.get(x, y + 1) {
        *d.values.get(x, y + 1) - v
    } else {
        0.0
    };
    [gx, gy]
}

/// 4-neighbour Laplacian of `D`, defined at interior pixels whose stencil is fully valid.
#[inline]
fn depth_laplacian(d: &DepthMap, x: usize, y: usize) -> Option<f64> {
    let (w, h) = (d.width(), d.height());
    if !interior(x, y, w, h) {
        return None;
    }
    let nb = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
    if !nb.iter().all(|&(nx, ny)| *d.valid.get(nx, ny)) {
        return None;
    }
    let s: f64 = nb.iter().map(|&(nx, ny)| *d.values.get(nx, ny)).sum();
    Some(s - 4.0 * *d.values.get(x, y))
}

/// Edge-aware first- and second-order depth smoothness, averaged over all pixels.
pub fn smoothness_loss(image: &Image, depth: &DepthMap, w: &LossWeights) -> Result<f64> {
    check_depth(image, depth)?;
    let (width, height) = (depth.width(), depth.height());
    let (w1, w2) = smoothness_weights(image, w);
    let mut sum = 0.0;
    for y in 0..height {
        for x in 0..width {
            if !*depth.valid.get(x, y) {
                continue;
            }
            let [gx, gy] = depth_diff(depth, x, y);
            sum += *w1.get(x, y) * (gx.abs() + gy.abs());
            if let Some(l) = depth_laplacian(depth, x, y) {
                sum += *w2.get(x, y) * l.abs();
            }
        }
    }
    Ok(sum / (width * height) as f64)
}

/// Adds `scale · ∂smoothness/∂D` into `grad`.
pub fn smoothness_backward(
    image: &Image,
    depth: &DepthMap,
    w: &LossWeights,
    scale: f64,
    grad: &mut Grid<f64>,
) -> Result<()> {
    check_depth(image, depth)?;
    let (width, height) = (depth.width(), depth.height());
    let (w1, w2) = smoothness_weights(image, w);
    let k = scale / (width * height) as f64;
    for y in 0..height {
        for x in 0..width {
            if !*depth.valid.get(x, y) {
                continue;
            }
            let [gx, gy] = depth_diff(depth, x, y);
            let c1 = k * *w1.get(x, y);
            if gx != 0.0 {
                let s = c1 * gx.signum();
                *grad.get_mut(x + 1, y) += s;
                *grad.get_mut(x, y) -= s;
            }
            if gy != 0.0 {
                let s = c1 * gy.signum();
                *grad.get_mut(x, y + 1) += s;
                *grad.get_mut(x, y) -= s;
            }
            if let Some(l) = depth_laplacian(depth, x, y) {
                if l != 0.0 {
                    let s = k * *w2.get(x, y) * l.signum();
                    *grad.get_mut(x - 1, y) += s;
                    *grad.get_mut(x + 1, y) += s;
                    *grad.get_mut(x, y - 1) += s;
                    *grad.get_mut(x, y + 1) += s;
                    *grad.get_mut(x, y) -= 4.0 * s;
                }
            }
        }
    }
    Ok(())
}

/// Unary term of view `i` against view `j` synthesized into it through `D_i`,
/// or `None` when the mask leaves nothing to compare.
fn directed_unary(
    target: &CameraView,
    source: &CameraView,
    target_depth: &DepthMap,
    mask: &Grid<bool>,
    w: &LossWeights,
) -> Result<Option<f64>> {
    let (syn, valid) = synthesize_view(target_depth, source, target)?;
    check_mask(&target.image, mask)?;
    let m = mask.and(&valid);
    match unary_loss(&target.image, &syn, &m, w) {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyMask) => {
            log::warn!("unary term skipped: empty mask");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Pairwise synthesis loss: both directed unary terms plus the mean of the two
/// views' smoothness priors.
pub fn synthesis_loss(
    view_i: &CameraView,
    view_j: &CameraView,
    d_i: &DepthMap,
    d_j: &DepthMap,
    m_ij: &Grid<bool>,
    m_ji: &Grid<bool>,
    w: &LossWeights,
) -> Result<f64> {
    let mut total = 0.0;
    if w.omega_u != 0.0 {
        let lu_ij = directed_unary(view_i, view_j, d_i, m_ij, w)?.unwrap_or(0.0);
        let lu_ji = directed_unary(view_j, view_i, d_j, m_ji, w)?.unwrap_or(0.0);
        total += w.omega_u * (lu_ij + lu_ji);
    }
    if w.omega_s != 0.0 {
        let ls_i = smoothness_loss(&view_i.image, d_i, w)?;
        let ls_j = smoothness_loss(&view_j.image, d_j, w)?;
        total += w.omega_s * 0.5 * (ls_i + ls_j);
    }
    Ok(total)
}

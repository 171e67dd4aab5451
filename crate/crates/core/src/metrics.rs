//! Depth-map error statistics and point-cloud accuracy/completeness.

use std::fmt::Write as _;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::error::{Error, Result};
use crate::fusion::PointCloud;
use crate::geometry::DepthMap;
use crate::reduce::sorted_sum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub abs_diff: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    /// Fraction of pixels with `max(p/g, g/p) < 1.25`.
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_evaluated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudMetrics {
    pub acc_mean: f64,
    pub acc_median: f64,
    /// Population variance of the accuracy distances.
    pub acc_var: f64,
    pub comp_mean: f64,
    pub comp_median: f64,
    pub comp_var: f64,
    /// Mean of `acc_mean` and `comp_mean`.
    pub overall: f64,
    pub acc_pct: f64,
    pub comp_pct: f64,
    pub f_score: f64,
    pub threshold: f64,
}

fn mean(values: &mut [f64]) -> f64 {
    sorted_sum(values) / values.len() as f64
}

fn joint_pairs(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<(f64, f64)>> {
    if !pred.values.same_shape(&gt.values) {
        return Err(Error::shape(
            format!("{}x{}", gt.width(), gt.height()),
            format!("{}x{}", pred.width(), pred.height()),
        ));
    }
    Ok(pred
        .values
        .as_slice()
        .iter()
        .zip(gt.values.as_slice())
        .zip(pred.valid.as_slice().iter().zip(gt.valid.as_slice()))
        .filter(|(_, (&a, &b))| a && b)
        .map(|((&p, &g), _)| (p, g))
        .collect())
}

/// Errors over pixels valid in both maps.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    metrics_from_pairs(joint_pairs(pred, gt)?)
}

/// Errors pooled over the jointly valid pixels of several map pairs.
pub fn depth_metrics_pooled(preds: &[DepthMap], gts: &[DepthMap]) -> Result<DepthMetrics> {
    if preds.len() != gts.len() {
        return Err(Error::shape(
            format!("{} maps", gts.len()),
            format!("{} maps", preds.len()),
        ));
    }
    let mut pairs = Vec::new();
    for (p, g) in preds.iter().zip(gts) {
        pairs.extend(joint_pairs(p, g)?);
    }
    metrics_from_pairs(pairs)
}

fn metrics_from_pairs(pairs: Vec<(f64, f64)>) -> Result<DepthMetrics> {
    if pairs.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    if pairs.iter().any(|&(_, g)| !(g > 0.0)) {
        return Err(Error::NonPositiveGt);
    }
    let n = pairs.len();
    let collect = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        pairs.iter().map(|&(p, g)| f(p, g)).collect()
    };
    let fraction = |limit: f64| {
        pairs
            .iter()
            .filter(|&&(p, g)| (p / g).max(g / p) < limit)
            .count() as f64
            / n as f64
    };
    let metrics = DepthMetrics {
        abs_rel: mean(&mut collect(&|p, g| (p - g).abs() / g)),
        abs_diff: mean(&mut collect(&|p, g| (p - g).abs())),
        sq_rel: mean(&mut collect(&|p, g| (p - g).powi(2) / g)),
        rmse: mean(&mut collect(&|p, g| (p - g).powi(2))).sqrt(),
        rmse_log: mean(&mut collect(&|p, g| (p.ln() - g.ln()).powi(2))).sqrt(),
        delta1: fraction(1.25),
        delta2: fraction(1.25f64.powi(2)),
        delta3: fraction(1.25f64.powi(3)),
        n_evaluated: n,
    };
    Ok(metrics)
}

/// Distance from each query point to its nearest neighbor in `reference`.
pub fn nearest_distances(query: &[[f64; 3]], reference: &[[f64; 3]]) -> Result<Vec<f64>> {
    if reference.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = ImmutableKdTree::<f64, 3>::new_from_slice(reference)
        .map_err(|e| Error::InvalidArgument(format!("cannot index point cloud: {e:?}")))?;
    Ok(query
        .iter()
        .map(|q| {
            tree.query(q)
                .nearest_one::<SquaredEuclidean<f64>>()
                .execute()
                .distance
                .sqrt()
        })
        .collect())
}

struct Summary {
    mean: f64,
    median: f64,
    var: f64,
    pct: f64,
}

fn summarize(mut d: Vec<f64>, threshold: f64) -> Summary {
    let n = d.len() as f64;
    let pct = 100.0 * d.iter().filter(|&&v| v < threshold).count() as f64 / n;
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    };
    let m = d.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = d.iter().map(|v| (v - m).powi(2)).collect();
    Summary {
        mean: m,
        median,
        var: sorted_sum(&mut sq) / n,
        pct,
    }
}

/// Accuracy (pred → gt) and completeness (gt → pred) distance statistics.
pub fn cloud_metrics(pred: &PointCloud, gt: &PointCloud, threshold: f64) -> Result<CloudMetrics> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let (p, g) = (pred.coords(), gt.coords());
    let acc = summarize(nearest_distances(&p, &g)?, threshold);
    let comp = summarize(nearest_distances(&g, &p)?, threshold);
    Ok(CloudMetrics {
        acc_mean: acc.mean,
        acc_median: acc.median,
        acc_var: acc.var,
        comp_mean: comp.mean,
        comp_median: comp.median,
        comp_var: comp.var,
        overall: overall(acc.mean, comp.mean),
        acc_pct: acc.pct,
        comp_pct: comp.pct,
        f_score: f_score(acc.pct, comp.pct),
        threshold,
    })
}

/// Single summary of accuracy and completeness: their mean.
pub fn overall(acc_mean: f64, comp_mean: f64) -> f64 {
    (acc_mean + comp_mean) / 2.0
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn f_score(acc_pct: f64, comp_pct: f64) -> f64 {
    if acc_pct + comp_pct == 0.0 {
        0.0
    } else {
        2.0 * acc_pct * comp_pct / (acc_pct + comp_pct)
    }
}

impl DepthMetrics {
    fn fields(&self) -> [(&'static str, String); 9] {
        [
            ("abs_rel", format!("{:e}", self.abs_rel)),
            ("abs_diff", format!("{:e}", self.abs_diff)),
            ("sq_rel", format!("{:e}", self.sq_rel)),
            ("rmse", format!("{:e}", self.rmse)),
            ("rmse_log", format!("{:e}", self.rmse_log)),
            ("delta1", format!("{:e}", self.delta1)),
            ("delta2", format!("{:e}", self.delta2)),
            ("delta3", format!("{:e}", self.delta3)),
            ("n_evaluated", self.n_evaluated.to_string()),
        ]
    }

    /// `key value` lines.
    pub fn report(&self) -> String {
        kv(&self.fields())
    }

    /// Header row plus one value row.
    pub fn csv(&self) -> String {
        csv(&self.fields())
    }
}

impl CloudMetrics {
    fn fields(&self) -> [(&'static str, String); 13] {
        [
            ("acc_mean", format!("{:e}", self.acc_mean)),
            ("acc_median", format!("{:e}", self.acc_median)),
            ("acc_var", format!("{:e}", self.acc_var)),
            ("acc_std", format!("{:e}", self.acc_var.sqrt())),
            ("comp_mean", format!("{:e}", self.comp_mean)),
            ("comp_median", format!("{:e}", self.comp_median)),
            ("comp_var", format!("{:e}", self.comp_var)),
            ("comp_std", format!("{:e}", self.comp_var.sqrt())),
            ("overall", format!("{:e}", self.overall)),
            ("acc_pct", format!("{:e}", self.acc_pct)),
            ("comp_pct", format!("{:e}", self.comp_pct)),
            ("f_score", format!("{:e}", self.f_score)),
            ("threshold", format!("{:e}", self.threshold)),
        ]
    }

    pub fn report(&self) -> String {
        kv(&self.fields())
    }

    pub fn csv(&self) -> String {
        csv(&self.fields())
    }
}

fn kv(fields: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in fields {
        let _ = writeln!(out, "{k} {v}");
    }
    out
}

fn csv(fields: &[(&str, String)]) -> String {
    let header: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
    let row: Vec<&str> = fields.iter().map(|(_, v)| v.as_str()).collect();
    format!("{}\n{}\n", header.join(","), row.join(","))
}

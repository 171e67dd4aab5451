//! Joint refinement of every view's depth map: plane-sweep initialization,
//! then gradient descent on the full objective alternated with occlusion-mask
//! re-estimation.

use crate::consistency::{occlusion_masks, LossBreakdown, LossContext, MaskSet};
use crate::error::{Error, Result};
use crate::geometry::{check_views, CameraView, DepthHypotheses, DepthMap, Grid};
use crate::photometry::LossWeights;
use crate::reduce::sorted_sum;
use crate::volume::{
    build_cost_volume, extract_features, regress_depth, smooth_cost_volume, FeatureMode,
    SmoothRadius,
};

/// Default softmax temperature, sized to variances of unit-range intensities.
pub const DEFAULT_TEMPERATURE: f64 = 1e-5;
/// Default cost smoothing before regression.
pub const DEFAULT_SMOOTH_RADIUS: SmoothRadius = SmoothRadius {
    depth: 0,
    height: 2,
    width: 2,
};

/// Backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    /// Step multiplier after a rejected trial, in `(0, 1)`.
    pub factor: f64,
    pub max_halvings: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            factor: 0.5,
            max_halvings: 8,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub inner_steps_per_mask_update: usize,
    /// Largest per-pixel move of a full step, in depth units.
    pub step_size: f64,
    pub line_search: LineSearch,
    /// Stop when an outer iteration lowers the loss by less than this fraction.
    pub convergence_tol: f64,
    pub hypotheses: DepthHypotheses,
    pub temperature: f64,
    pub feature_mode: FeatureMode,
    pub smooth_radius: SmoothRadius,
    pub weights: LossWeights,
}

impl SolverConfig {
    /// Defaults for a depth range; the step is half a hypothesis spacing.
    pub fn new(hypotheses: DepthHypotheses) -> Self {
        SolverConfig {
            max_outer_iters: 50,
            inner_steps_per_mask_update: 5,
            step_size: 0.5 * hypotheses.spacing(),
            line_search: LineSearch::default(),
            convergence_tol: 1e-4,
            hypotheses,
            temperature: DEFAULT_TEMPERATURE,
            feature_mode: FeatureMode::default(),
            smooth_radius: DEFAULT_SMOOTH_RADIUS,
            weights: LossWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_size", self.step_size),
            ("convergence_tol", self.convergence_tol),
            ("temperature", self.temperature),
            ("armijo", self.line_search.armijo),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let f = self.line_search.factor;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "line search factor must lie in (0, 1), got {f}"
            )));
        }
        if self.inner_steps_per_mask_update == 0 {
            return Err(Error::InvalidArgument(
                "inner_steps_per_mask_update must be at least 1".into(),
            ));
        }
        self.weights.validate()
    }
}

/// One recorded loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    /// Outer iteration (mask phase) the entry belongs to.
    pub outer: usize,
    /// Accepted steps within the phase; 0 is the phase start.
    pub step: usize,
    pub total: f64,
    /// Unweighted sums of the unary, smoothness, image, depth and brightness terms.
    pub families: [f64; 5],
}

impl HistoryEntry {
    fn new(outer: usize, step: usize, b: &LossBreakdown) -> Self {
        HistoryEntry {
            outer,
            step,
            total: b.total,
            families: b.family_sums(),
        }
    }
}

/// CSV with one row per history entry.
pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from(
        "outer,step,total,unary,smoothness,image_consistency,depth_consistency,brightness\n",
    );
    for h in history {
        let f = h.families;
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            h.outer, h.step, h.total, f[0], f[1], f[2], f[3], f[4]
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub views: Vec<CameraView>,
    pub depths: Vec<DepthMap>,
    pub masks: MaskSet,
    pub weights: LossWeights,
    /// Completed outer iterations.
    pub iteration: usize,
    pub history: Vec<HistoryEntry>,
    /// Set when the loss became non-finite and no step could be taken.
    pub diverged: bool,
}

impl SolverState {
    /// State with masks computed at the given depths.
    pub fn new(views: Vec<CameraView>, depths: Vec<DepthMap>, weights: LossWeights) -> Result<Self> {
        let masks = occlusion_masks(&views, &depths, weights.tau_occ)?;
        Ok(SolverState {
            views,
            depths,
            masks,
            weights,
            iteration: 0,
            history: Vec::new(),
            diverged: false,
        })
    }

    pub fn breakdown(&self) -> Result<LossBreakdown> {
        LossContext::new(&self.views, &self.depths, &self.masks, &self.weights)?.breakdown()
    }
}

/// Initial depth for every view, each taking its turn as the reference.
pub fn init_depths(
    views: &[CameraView],
    hypotheses: &DepthHypotheses,
    temperature: f64,
) -> Result<Vec<DepthMap>> {
    init_depths_with(
        views,
        hypotheses,
        temperature,
        FeatureMode::default(),
        DEFAULT_SMOOTH_RADIUS,
    )
}

pub fn init_depths_with(
    views: &[CameraView],
    hypotheses: &DepthHypotheses,
    temperature: f64,
    mode: FeatureMode,
    radius: SmoothRadius,
) -> Result<Vec<DepthMap>> {
    if views.len() < 2 {
        return Err(Error::TooFewViews(views.len()));
    }
    check_views(views)?;
    let features: Vec<_> = views
        .iter()
        .map(|v| extract_features(&v.image, mode))
        .collect();
    (0..views.len())
        .map(|r| {
            let vol = build_cost_volume(views, &features, r, hypotheses)?;
            let vol = smooth_cost_volume(&vol, radius);
            Ok(regress_depth(&vol, temperature)?.0)
        })
        .collect()
}

/// `∂total/∂D` for every view at the state's depths, masks held fixed.
pub fn loss_gradient(state: &SolverState) -> Result<Vec<Grid<f64>>> {
    LossContext::new(&state.views, &state.depths, &state.masks, &state.weights)?.gradient()
}

fn evaluate(
    views: &[CameraView],
    depths: &[DepthMap],
    masks: &MaskSet,
    w: &LossWeights,
) -> Result<Option<LossBreakdown>> {
    match LossContext::new(views, depths, masks, w)?.breakdown() {
        Ok(b) => Ok(Some(b)),
        Err(Error::NonFiniteResult(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

enum StepOutcome {
    Accepted(LossBreakdown, Vec<DepthMap>),
    Stalled { saw_non_finite: bool },
}

/// One backtracking step along `−g / max|g|` from `depths`.
fn line_search_step(
    state: &SolverState,
    current: &LossBreakdown,
    config: &SolverConfig,
    step: &mut f64,
) -> Result<StepOutcome> {
    let ctx = LossContext::new(&state.views, &state.depths, &state.masks, &state.weights)?;
    let grads = match ctx.gradient() {
        Ok(g) => g,
        Err(Error::NonFiniteResult(_)) => {
            return Ok(StepOutcome::Stalled {
                saw_non_finite: true,
            })
        }
        Err(e) => return Err(e),
    };
    let scale = grads
        .iter()
        .flat_map(|g| g.as_slice().iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(StepOutcome::Stalled {
            saw_non_finite: false,
        });
    }
    let hyp = &config.hypotheses;
    let mut saw_non_finite = false;
    let mut alpha = *step;
    for _ in 0..=config.line_search.max_halvings {
        let mut moved = Vec::new();
        let trial: Vec<DepthMap> = state
            .depths
            .iter()
            .zip(&grads)
            .map(|(d, g)| {
                let values = Grid::from_fn(d.width(), d.height(), |x, y| {
                    let v = *d.values.get(x, y);
                    if !*d.valid.get(x, y) {
                        return v;
                    }
                    let gv = *g.get(x, y);
                    let nv = hyp.clamp(v - alpha * gv / scale);
                    moved.push(gv * (nv - v));
                    nv
                });
                DepthMap {
                    values,
                    valid: d.valid.clone(),
                }
            })
            .collect();
        let slope = sorted_sum(&mut moved);
        match evaluate(&state.views, &trial, &state.masks, &state.weights)? {
            Some(b) if b.total <= current.total + config.line_search.armijo * slope => {
                *step = (alpha / config.line_search.factor).min(config.step_size);
                return Ok(StepOutcome::Accepted(b, trial));
            }
            Some(_) => {}
            None => saw_non_finite = true,
        }
        alpha *= config.line_search.factor;
    }
    Ok(StepOutcome::Stalled { saw_non_finite })
}

/// Alternates mask re-estimation with masked gradient descent.
pub fn refine(mut state: SolverState, config: &SolverConfig) -> Result<SolverState> {
    config.validate()?;
    state.weights = config.weights;
    state.masks = occlusion_masks(&state.views, &state.depths, state.weights.tau_occ)?;
    let mut step = config.step_size;
    while state.iteration < config.max_outer_iters {
        let outer = state.iteration;
        if outer > 0 {
            state.masks = occlusion_masks(&state.views, &state.depths, state.weights.tau_occ)?;
        }
        let Some(start) = evaluate(&state.views, &state.depths, &state.masks, &state.weights)?
        else {
            state.diverged = true;
            break;
        };
        state.history.push(HistoryEntry::new(outer, 0, &start));
        let mut current = start.clone();
        let mut accepted = 0;
        let mut stalled_non_finite = false;
        for _ in 0..config.inner_steps_per_mask_update {
            match line_search_step(&state, &current, config, &mut step)? {
                StepOutcome::Accepted(b, depths) => {
                    accepted += 1;
                    state.depths = depths;
                    state.history.push(HistoryEntry::new(outer, accepted, &b));
                    current = b;
                }
                StepOutcome::Stalled { saw_non_finite } => {
                    stalled_non_finite = saw_non_finite;
                    break;
                }
            }
        }
        state.iteration += 1;
        log::debug!(
            "outer {outer}: loss {:e} -> {:e} ({accepted} steps)",
            start.total,
            current.total
        );
        if accepted == 0 && stalled_non_finite {
            state.diverged = true;
            break;
        }
        let decrease = (start.total - current.total) / start.total.abs().max(f64::MIN_POSITIVE);
        if decrease < config.convergence_tol {
            break;
        }
    }
    Ok(state)
}

/// Initialization followed by refinement.
pub fn run_pipeline(views: &[CameraView], config: &SolverConfig) -> Result<SolverState> {
    config.validate()?;
    let depths = init_depths_with(
        views,
        &config.hypotheses,
        config.temperature,
        config.feature_mode,
        config.smooth_radius,
    )?;
    let state = SolverState::new(views.to_vec(), depths, config.weights)?;
    refine(state, config)
}

//! End-to-end orchestration: segmentation, impact filtering with a second
//! prompting round, tracing, optimization, and the missing-component
//! refinement round.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::geom::Rgb;
use crate::num::Real;
use crate::optim::{optimize, OptimizerState};
use crate::raster::{
    connected_components, convolve_binary, difference_map, make_circular_kernel, RasterImage,
    ScalarMap,
};
use crate::render::{mse_loss, render, RenderConfig};
use crate::segment::{
    auto_segment_with_tolerance, clean_mask, default_min_area, ingest_masks, prompt_segment, Mask,
    PromptPoint,
};
use crate::select::{
    coverage_alpha, filter_by_impact, find_uncovered_points, mean_shift, Canvas, ImpactDecision,
};
use crate::svg::{stats, BezierPath, DocumentStats, VectorDocument};
use crate::trace::{
    corner_strength, default_k, extract_contour, fit_path, select_corners, MIN_TRACEABLE_AREA,
};

/// Where segmentation masks come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provider {
    /// Built-in region-growing segmenter on a prompt grid.
    Builtin,
    /// Masks ingested from a JSON manifest (see [`ingest_masks`]).
    Manifest(PathBuf),
}

/// Tunables for [`vectorize`]. Defaults match the CLI flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<T = f64> {
    /// Prompt grid side for the builtin provider.
    pub grid_side: usize,
    /// Minimum error reduction for a mask to survive the impact filter.
    pub impact_threshold: T,
    /// Cubic segments per traced path.
    pub segments_per_path: usize,
    /// Optimization iterations before and after the refinement round.
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    /// Threshold on the mean-filtered difference map (range 0..3).
    pub omega: T,
    /// Detection-disc radius as a fraction of `min(width, height)`.
    pub kernel_fraction: T,
    pub provider: Provider,
    /// Weight of the self-interaction regularizer.
    pub lambda_xing: T,
    /// RGB tolerance for the builtin region grower.
    pub tolerance: T,
    pub render: RenderConfig<T>,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        PipelineConfig {
            grid_side: 32,
            impact_threshold: T::of(0.001),
            segments_per_path: 4,
            phase1_iters: 500,
            phase2_iters: 500,
            omega: T::of(0.784),
            kernel_fraction: T::of(0.03),
            provider: Provider::Builtin,
            lambda_xing: T::of(0.01),
            tolerance: T::of(crate::segment::DEFAULT_TOLERANCE),
            render: RenderConfig::default(),
        }
    }
}

impl<T: Real> PipelineConfig<T> {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.grid_side < 1 {
            return Err(Error::invalid("grid_side must be >= 1"));
        }
        if self.segments_per_path < 2 {
            return Err(Error::invalid("segments_per_path must be >= 2"));
        }
        if !(self.impact_threshold >= T::zero()) {
            return Err(Error::invalid("impact_threshold must be >= 0"));
        }
        if !(self.omega > T::zero() && self.omega < T::of(3.0)) {
            return Err(Error::invalid("omega must lie in (0, 3)"));
        }
        if !(self.kernel_fraction > T::zero()) {
            return Err(Error::invalid("kernel_fraction must be > 0"));
        }
        if !(self.lambda_xing >= T::zero()) {
            return Err(Error::invalid("lambda_xing must be >= 0"));
        }
        if !(self.tolerance > T::zero()) {
            return Err(Error::invalid("tolerance must be > 0"));
        }
        self.render.validate()
    }

    /// Detection-disc radius in pixels for a given image size.
    pub fn kernel_radius(&self, width: usize, height: usize) -> f64 {
        let fraction = self.kernel_fraction.to_f64_lossy();
        (fraction * width.min(height) as f64).round().max(3.0)
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageSeconds {
    pub segmentation: f64,
    pub filtering: f64,
    pub tracing: f64,
    pub optimization: f64,
    pub refinement: f64,
    pub total: f64,
}

/// Optimizer settings echoed for verification.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizerSettings {
    pub lr_points: f64,
    pub lr_colors: f64,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
}

/// Run summary; serializes to JSON via the CLI `--report` flag.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub stage_seconds: StageSeconds,
    /// Candidates submitted to the impact filter (both prompting rounds).
    pub masks_before_filter: usize,
    /// Masks that survived the impact filter.
    pub masks_after_filter: usize,
    /// Mean-shift modes prompted in the uncovered-region round.
    pub uncovered_prompts: usize,
    pub decisions: Vec<ImpactDecision>,
    /// Missing-component centers prompted in the refinement round.
    pub refinement_prompts: usize,
    pub refinement_decisions: Vec<ImpactDecision>,
    pub final_mse: f64,
    pub stats: DocumentStats,
    /// True when the final document contains no paths.
    pub zero_paths: bool,
    pub optimizer: OptimizerSettings,
}

/// Binary map of regions whose mean-filtered difference reaches `omega`.
///
/// The difference map is convolved with the radius-`r` disc and divided by
/// the disc's cell count, so `omega` thresholds a local mean on the same
/// 0..3 scale as the per-pixel difference.
pub fn missing_map<T: Real>(
    target: &RasterImage<T>,
    rendered: &RasterImage<T>,
    r: f64,
    omega: T,
) -> Result<ScalarMap<T>> {
    let diff = difference_map(target, rendered)?;
    let kernel = make_circular_kernel(r)?;
    let summed = convolve_binary(&diff, &kernel);
    let count = T::of_usize(kernel.count());
    let mut thresholded = ScalarMap::zeros(diff.width(), diff.height());
    for y in 0..diff.height() {
        for x in 0..diff.width() {
            if summed.get(x, y) / count >= omega {
                thresholded.set(x, y, T::one());
            }
        }
    }
    Ok(thresholded)
}

/// Centers of the connected regions where the render still misses the
/// target (Stage 4 prompts).
pub fn detect_missing<T: Real>(
    target: &RasterImage<T>,
    rendered: &RasterImage<T>,
    r: f64,
    omega: T,
) -> Result<Vec<PromptPoint>> {
    let map = missing_map(target, rendered, r, omega)?;
    Ok(connected_components(&map)?
        .into_iter()
        .map(|c| PromptPoint::new(c.centroid.0, c.centroid.1))
        .collect())
}

/// Traces every kept mask into paths, in the given order (Stage 2).
pub fn trace_masks<T: Real>(
    kept: &[(Mask, Rgb<T>)],
    image: &RasterImage<T>,
    segments: usize,
) -> Result<Vec<BezierPath<T>>> {
    let mut paths = Vec::new();
    for (mask, _) in kept {
        if mask.area() < MIN_TRACEABLE_AREA {
            continue;
        }
        for contour in extract_contour::<T>(mask)? {
            let k = default_k(contour.len());
            if contour.len() <= 2 * k || contour.len() < segments {
                continue;
            }
            let strengths = corner_strength(&contour, k)?;
            let suppress = T::of(contour.len() as f64 / (2.0 * segments as f64));
            let corners = select_corners(&strengths, segments, suppress)?;
            paths.push(fit_path(&contour, &corners, image, mask)?);
        }
    }
    Ok(paths)
}

/// Sorts kept masks largest-first (ties by first true pixel) for stacking.
fn sort_for_stacking<T: Real>(kept: &mut [(Mask, Rgb<T>)]) {
    kept.sort_by(|a, b| {
        b.0.area()
            .cmp(&a.0.area())
            .then_with(|| a.0.first_true_pixel().cmp(&b.0.first_true_pixel()))
    });
}

/// Everything Stage 1 produces: the kept masks with their colors, the final
/// filter canvas, the coverage alpha of the kept masks, the filter
/// decisions (both prompting rounds), the mean-shift modes prompted in the
/// second round, and the candidate count submitted to the filter.
pub struct Stage1<T = f64> {
    pub kept: Vec<(Mask, Rgb<T>)>,
    pub canvas: Canvas<T>,
    pub alpha: ScalarMap<T>,
    pub decisions: Vec<ImpactDecision>,
    pub uncovered_modes: Vec<PromptPoint>,
    pub candidates: usize,
    pub segmentation_seconds: f64,
    pub filtering_seconds: f64,
}

/// Stage 1: acquire masks, clean them, filter by impact, then prompt once
/// more inside the uncovered regions and filter the extra masks against the
/// running canvas.
pub fn segment_and_filter<T: Real>(
    image: &RasterImage<T>,
    cfg: &PipelineConfig<T>,
) -> Result<Stage1<T>> {
    let (w, h) = (image.width(), image.height());
    let min_area = default_min_area(w, h);

    let clock = Instant::now();
    let raw = match &cfg.provider {
        Provider::Builtin => auto_segment_with_tolerance(image, cfg.grid_side, cfg.tolerance)?,
        Provider::Manifest(path) => ingest_masks(path, image)?,
    };
    let mut candidates = Vec::with_capacity(raw.len());
    for mask in &raw {
        let cleaned = clean_mask(mask, min_area)?;
        if cleaned.area() > 0 {
            candidates.push(cleaned);
        }
    }
    let segmentation_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut submitted = candidates.len();
    let (mut kept, canvas, mut decisions) =
        filter_by_impact(&candidates, image, cfg.impact_threshold, &Canvas::blank(w, h))?;
    let kept_masks: Vec<Mask> = kept.iter().map(|(m, _)| m.clone()).collect();
    let alpha = coverage_alpha::<T>(w, h, &kept_masks)?;
    let r = cfg.kernel_radius(w, h);
    let uncovered = find_uncovered_points(&alpha, r)?;
    let modes = mean_shift(&uncovered, T::of(2.0 * r))?;
    let mut extra = Vec::with_capacity(modes.len());
    for mode in &modes {
        let mask = clean_mask(&prompt_segment(image, *mode, cfg.tolerance)?, min_area)?;
        if mask.area() > 0 {
            extra.push(mask);
        }
    }
    submitted += extra.len();
    let (kept2, canvas2, decisions2) =
        filter_by_impact(&extra, image, cfg.impact_threshold, &canvas)?;
    let offset = decisions.len();
    decisions.extend(decisions2.into_iter().map(|mut d| {
        d.index += offset;
        d
    }));
    kept.extend(kept2);
    let filtering_seconds = clock.elapsed().as_secs_f64();

    Ok(Stage1 {
        kept,
        canvas: canvas2,
        alpha,
        decisions,
        uncovered_modes: modes,
        candidates: submitted,
        segmentation_seconds,
        filtering_seconds,
    })
}

/// One missing-component refinement round (Stage 4): detect residual
/// regions on the current render, prompt there, filter against the render
/// as the starting canvas, trace, and append the new paths topmost.
///
/// Returns the extended document, the prompt points, and the filter
/// decisions. The caller runs the follow-up optimization.
pub fn refine_missing<T: Real>(
    doc: &VectorDocument<T>,
    image: &RasterImage<T>,
    cfg: &PipelineConfig<T>,
) -> Result<(VectorDocument<T>, Vec<PromptPoint>, Vec<ImpactDecision>)> {
    let (w, h) = (image.width(), image.height());
    let rendered = render(doc, w, h, &cfg.render)?;
    let r = cfg.kernel_radius(w, h);
    let centers = detect_missing(image, &rendered, r, cfg.omega)?;
    let min_area = default_min_area(w, h);
    let mut candidates = Vec::with_capacity(centers.len());
    for c in &centers {
        let mask = clean_mask(&prompt_segment(image, *c, cfg.tolerance)?, min_area)?;
        if mask.area() > 0 {
            candidates.push(mask);
        }
    }
    let start = Canvas::from_image(&rendered);
    let (kept, _, decisions) =
        filter_by_impact(&candidates, image, cfg.impact_threshold, &start)?;
    let mut out = doc.clone();
    out.paths
        .extend(trace_masks(&kept, image, cfg.segments_per_path)?);
    Ok((out, centers, decisions))
}

/// Runs the full pipeline on `image` and returns the vector document plus a
/// run report.
pub fn vectorize<T: Real>(
    image: &RasterImage<T>,
    cfg: &PipelineConfig<T>,
) -> Result<(VectorDocument<T>, PipelineReport)> {
    cfg.validate()?;
    let total_clock = Instant::now();
    let (w, h) = (image.width(), image.height());
    let mut timings = StageSeconds::default();

    // Stage 1: masks, impact filter, second prompting round.
    let stage1 = segment_and_filter(image, cfg)?;
    timings.segmentation = stage1.segmentation_seconds;
    timings.filtering = stage1.filtering_seconds;
    let masks_before = stage1.candidates;
    let masks_after = stage1.kept.len();
    let mut kept = stage1.kept;
    let decisions = stage1.decisions;
    let modes = stage1.uncovered_modes;

    // Stage 2: trace, biggest masks backmost.
    let clock = Instant::now();
    sort_for_stacking(&mut kept);
    let mut doc = VectorDocument::new(w, h);
    doc.paths = trace_masks(&kept, image, cfg.segments_per_path)?;
    timings.tracing = clock.elapsed().as_secs_f64();

    // Stage 3: first optimization phase.
    let clock = Instant::now();
    let mut phase1_state = OptimizerState::default();
    doc = optimize(
        &doc,
        image,
        cfg.phase1_iters,
        &mut phase1_state,
        &cfg.render,
        cfg.lambda_xing,
    )?;
    timings.optimization = clock.elapsed().as_secs_f64();

    // Stage 4: missing-component round, then the second phase.
    let clock = Instant::now();
    let (extended, prompts, refinement_decisions) = refine_missing(&doc, image, cfg)?;
    doc = extended;
    timings.refinement = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut phase2_state = OptimizerState::default();
    doc = optimize(
        &doc,
        image,
        cfg.phase2_iters,
        &mut phase2_state,
        &cfg.render,
        cfg.lambda_xing,
    )?;
    timings.optimization += clock.elapsed().as_secs_f64();

    let final_render = render(&doc, w, h, &cfg.render)?;
    let final_mse = mse_loss(&final_render, image)?.to_f64_lossy();
    timings.total = total_clock.elapsed().as_secs_f64();

    let report = PipelineReport {
        stage_seconds: timings,
        masks_before_filter: masks_before,
        masks_after_filter: masks_after,
        uncovered_prompts: modes.len(),
        decisions,
        refinement_prompts: prompts.len(),
        refinement_decisions,
        final_mse,
        stats: stats(&doc),
        zero_paths: doc.paths.is_empty(),
        optimizer: OptimizerSettings {
            lr_points: phase1_state.lr_points.to_f64_lossy(),
            lr_colors: phase1_state.lr_colors.to_f64_lossy(),
            phase1_iters: cfg.phase1_iters,
            phase2_iters: cfg.phase2_iters,
        },
    };
    Ok((doc, report))
}

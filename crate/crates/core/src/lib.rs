//! layertrace: raster images to layered SVG documents.
//!
//! The pipeline runs in four stages:
//!
//! 1. **Segment** — obtain region masks, either from a manifest of
//!    externally produced mask files or from the built-in promptable
//!    region-growing segmenter.
//! 2. **Filter** — keep only masks whose flat-color composite measurably
//!    reduces reconstruction error ("filter by impact"), then prompt again
//!    inside regions the kept masks leave uncovered.
//! 3. **Trace** — convert each kept mask into a closed chain of cubic
//!    Bezier segments with a least-squares fit between detected corners.
//! 4. **Optimize** — refine control points and fill colors by gradient
//!    descent against the target image through a soft (differentiable)
//!    rasterizer, then detect still-missing components from the error map
//!    and run one more prompt/filter/trace/optimize round.
//!
//! All floating-point math is generic over [`Real`] (`f32` or `f64`); the
//! crate-root aliases below fix the default `f64` working precision.

pub mod error;
pub mod geom;
pub mod num;
pub mod optim;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod segment;
pub mod select;
pub mod svg;
pub mod trace;

pub use error::{Error, Result};
pub use geom::{Point, Rgb};
pub use num::Real;
pub use raster::{
    connected_components, convolve_binary, difference_map, load_image, make_circular_kernel,
    write_pgm, write_ppm, BinaryKernel, Component, RasterImage, ScalarMap,
};
pub use segment::{
    auto_segment, auto_segment_with_tolerance, clean_mask, default_min_area, ingest_masks,
    prompt_segment, Mask, PromptPoint,
};
pub use select::{
    canvas_error, composite, coverage_alpha, filter_by_impact, find_uncovered_points, mean_color,
    mean_shift, Canvas, ImpactDecision,
};
pub use trace::{
    corner_strength, default_k, extract_contour, fit_path, select_corners, Contour,
    MIN_TRACEABLE_AREA,
};

pub use optim::{optimize, OptimizerState, DEFAULT_LR_COLORS, DEFAULT_LR_POINTS};
pub use pipeline::{
    detect_missing, missing_map, refine_missing, segment_and_filter, trace_masks, vectorize,
    OptimizerSettings, PipelineConfig, PipelineReport, Provider, Stage1, StageSeconds,
};
pub use render::{
    doc_to_params, mse_loss, params_to_doc, render, total_loss, xing_loss, Gradients,
    PathGradient, RenderConfig,
};
pub use svg::{
    parse_svg, read_svg, stats, svg_string, write_svg, BezierPath, CubicSegment, DocumentStats,
    VectorDocument,
};

/// Single-precision aliases; the unsuffixed generic types default to `f64`.
pub type RasterImage32 = RasterImage<f32>;
pub type ScalarMap32 = ScalarMap<f32>;
pub type VectorDocument32 = VectorDocument<f32>;
pub type PipelineConfig32 = PipelineConfig<f32>;

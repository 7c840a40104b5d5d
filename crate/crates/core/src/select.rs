//! Mask selection: the impact filter, coverage accounting, uncovered-region
//! candidate points, and mean-shift clustering of those candidates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::Rgb;
use crate::num::Real;
use crate::raster::{convolve_binary, make_circular_kernel, RasterImage, ScalarMap};
use crate::segment::{Mask, PromptPoint};

/// RGB canvas with per-pixel coverage flags, the impact-filter accumulator.
///
/// Uncovered pixels hold the (0, 0, 0) sentinel and are charged the maximum
/// per-pixel error by [`canvas_error`] instead of being compared directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas<T = f64> {
    width: usize,
    height: usize,
    color: Vec<Rgb<T>>,
    covered: Vec<bool>,
}

impl<T: Real> Canvas<T> {
    /// Blank canvas: nothing covered.
    pub fn blank(width: usize, height: usize) -> Self {
        Canvas {
            width,
            height,
            color: vec![[T::zero(); 3]; width * height],
            covered: vec![false; width * height],
        }
    }

    /// Canvas primed with an existing render, every pixel marked covered.
    pub fn from_image(image: &RasterImage<T>) -> Self {
        Canvas {
            width: image.width(),
            height: image.height(),
            color: image.pixels().to_vec(),
            covered: vec![true; image.width() * image.height()],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn color(&self, x: usize, y: usize) -> Rgb<T> {
        self.color[y * self.width + x]
    }

    pub fn is_covered(&self, x: usize, y: usize) -> bool {
        self.covered[y * self.width + x]
    }
}

/// Outcome of one impact-filter trial, in processing order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactDecision {
    /// Position of the mask in the (area-sorted) processing sequence.
    pub index: usize,
    /// Mask area in pixels.
    pub area: usize,
    /// Error reduction achieved by the trial composite.
    pub impact: f64,
    /// Whether the mask was kept (`impact >= threshold`).
    pub kept: bool,
}

/// Mean of the image pixels under the mask, per channel.
pub fn mean_color<T: Real>(image: &RasterImage<T>, mask: &Mask) -> Result<Rgb<T>> {
    if mask.width() != image.width() || mask.height() != image.height() {
        return Err(Error::dimension("mean_color: mask/image size mismatch"));
    }
    if mask.area() == 0 {
        return Err(Error::invalid("mean_color: empty mask"));
    }
    let mut sum = [T::zero(); 3];
    for y in 0..image.height() {
        for x in 0..image.width() {
            if mask.get(x, y) {
                let px = image.pixel(x, y);
                for c in 0..3 {
                    sum[c] = sum[c] + px[c];
                }
            }
        }
    }
    let n = T::of_usize(mask.area());
    Ok([sum[0] / n, sum[1] / n, sum[2] / n])
}

/// Returns a copy of `canvas` with the masked pixels set to `color` and
/// marked covered; the input is not mutated.
pub fn composite<T: Real>(canvas: &Canvas<T>, mask: &Mask, color: Rgb<T>) -> Result<Canvas<T>> {
    if mask.width() != canvas.width || mask.height() != canvas.height {
        return Err(Error::dimension("composite: mask/canvas size mismatch"));
    }
    let mut out = canvas.clone();
    for y in 0..canvas.height {
        for x in 0..canvas.width {
            if mask.get(x, y) {
                let idx = y * canvas.width + x;
                out.color[idx] = color;
                out.covered[idx] = true;
            }
        }
    }
    Ok(out)
}

/// Normalized reconstruction error of a canvas against the target.
///
/// Covered pixels contribute their summed squared channel error; uncovered
/// pixels are pinned at the per-pixel maximum 3. The total is divided by
/// `3 * w * h`, so the result lies in `[0, 1]`.
pub fn canvas_error<T: Real>(target: &RasterImage<T>, canvas: &Canvas<T>) -> Result<T> {
    if canvas.width != target.width() || canvas.height != target.height() {
        return Err(Error::dimension("canvas_error: size mismatch"));
    }
    let mut sum = T::zero();
    let three = T::of(3.0);
    for y in 0..canvas.height {
        for x in 0..canvas.width {
            let idx = y * canvas.width + x;
            if canvas.covered[idx] {
                let t = target.pixel(x, y);
                let c = canvas.color[idx];
                for ch in 0..3 {
                    let d = t[ch] - c[ch];
                    sum = sum + d * d;
                }
            } else {
                sum = sum + three;
            }
        }
    }
    Ok(sum / (three * T::of_usize(canvas.width * canvas.height)))
}

/// Greedy mask selection by error impact.
///
/// Masks are processed largest-area first (ties broken by the first true
/// pixel in row-major order). Each mask is composited tentatively with its
/// mean color; it is kept iff the error reduction `e_prev - e_new` reaches
/// `threshold`, otherwise the canvas reverts to the previous state. Returns
/// the kept masks with their colors, the final canvas, and one decision per
/// processed mask.
pub fn filter_by_impact<T: Real>(
    masks: &[Mask],
    image: &RasterImage<T>,
    threshold: T,
    start: &Canvas<T>,
) -> Result<(Vec<(Mask, Rgb<T>)>, Canvas<T>, Vec<ImpactDecision>)> {
    for m in masks {
        if m.width() != image.width() || m.height() != image.height() {
            return Err(Error::dimension("filter_by_impact: mask/image size mismatch"));
        }
    }
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by(|a, b| {
        masks[*b]
            .area()
            .cmp(&masks[*a].area())
            .then_with(|| masks[*a].first_true_pixel().cmp(&masks[*b].first_true_pixel()))
            .then_with(|| masks[*a].bits().cmp(masks[*b].bits()))
    });

    let mut canvas = start.clone();
    let mut prev_error = canvas_error(image, &canvas)?;
    let mut kept = Vec::new();
    let mut decisions = Vec::new();
    for (index, &mask_idx) in order.iter().enumerate() {
        let mask = &masks[mask_idx];
        if mask.area() == 0 {
            decisions.push(ImpactDecision {
                index,
                area: 0,
                impact: 0.0,
                kept: false,
            });
            continue;
        }
        let color = mean_color(image, mask)?;
        let trial = composite(&canvas, mask, color)?;
        let trial_error = canvas_error(image, &trial)?;
        let impact = prev_error - trial_error;
        let keep = impact >= threshold;
        decisions.push(ImpactDecision {
            index,
            area: mask.area(),
            impact: impact.to_f64_lossy(),
            kept: keep,
        });
        if keep {
            canvas = trial;
            prev_error = trial_error;
            kept.push((mask.clone(), color));
        }
    }
    Ok((kept, canvas, decisions))
}

/// Bitwise OR of the masks as a 0/1 scalar map.
pub fn coverage_alpha<T: Real>(width: usize, height: usize, masks: &[Mask]) -> Result<ScalarMap<T>> {
    let mut out = ScalarMap::zeros(width, height);
    for m in masks {
        if m.width() != width || m.height() != height {
            return Err(Error::dimension("coverage_alpha: mask size mismatch"));
        }
        for y in 0..height {
            for x in 0..width {
                if m.get(x, y) {
                    out.set(x, y, T::one());
                }
            }
        }
    }
    Ok(out)
}

/// Coordinates whose entire radius-`r` disc is uncovered.
///
/// The coverage alpha is convolved with the disc kernel; a pixel qualifies
/// when the result is exactly zero. Zero padding means off-image area counts
/// as uncovered, so near-border points qualify whenever the in-bounds part
/// of their disc is uncovered.
pub fn find_uncovered_points<T: Real>(alpha: &ScalarMap<T>, r: f64) -> Result<Vec<PromptPoint>> {
    if !alpha.is_binary() {
        return Err(Error::invalid("find_uncovered_points: alpha must be 0/1"));
    }
    let kernel = make_circular_kernel(r)?;
    let convolved = convolve_binary(alpha, &kernel);
    let mut points = Vec::new();
    for y in 0..alpha.height() {
        for x in 0..alpha.width() {
            if convolved.get(x, y) == T::zero() {
                points.push(PromptPoint::new(x, y));
            }
        }
    }
    Ok(points)
}

/// Flat-kernel mean shift over pixel coordinates.
///
/// Each point moves to the mean of the original points within `bandwidth`
/// until the shift drops below 0.01 px or 100 iterations pass. Converged
/// positions are rounded to pixels; rounded modes closer than
/// `bandwidth / 2` merge into the first (row-major) representative. The
/// result is sorted row-major.
pub fn mean_shift<T: Real>(points: &[PromptPoint], bandwidth: T) -> Result<Vec<PromptPoint>> {
    if !(bandwidth > T::zero()) {
        return Err(Error::invalid("mean_shift: bandwidth must be positive"));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let coords: Vec<(T, T)> = points
        .iter()
        .map(|p| (T::of_usize(p.x), T::of_usize(p.y)))
        .collect();
    let stop = T::of(0.01);
    let mut modes: Vec<(usize, usize)> = Vec::with_capacity(points.len());
    for &(sx, sy) in &coords {
        let (mut x, mut y) = (sx, sy);
        for _ in 0..100 {
            let mut mx = T::zero();
            let mut my = T::zero();
            let mut n = T::zero();
            for &(px, py) in &coords {
                let dx = px - x;
                let dy = py - y;
                if (dx * dx + dy * dy).sqrt() <= bandwidth {
                    mx = mx + px;
                    my = my + py;
                    n = n + T::one();
                }
            }
            if n == T::zero() {
                break;
            }
            mx = mx / n;
            my = my / n;
            let shift = ((mx - x).powi(2) + (my - y).powi(2)).sqrt();
            x = mx;
            y = my;
            if shift < stop {
                break;
            }
        }
        modes.push((
            x.to_f64_lossy().round().max(0.0) as usize,
            y.to_f64_lossy().round().max(0.0) as usize,
        ));
    }
    modes.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let half = bandwidth / T::of(2.0);
    let mut accepted: Vec<PromptPoint> = Vec::new();
    for (x, y) in modes {
        let is_new = accepted.iter().all(|m| {
            let dx = T::of_usize(m.x.max(x) - m.x.min(x));
            let dy = T::of_usize(m.y.max(y) - m.y.min(y));
            (dx * dx + dy * dy).sqrt() >= half
        });
        if is_new {
            accepted.push(PromptPoint::new(x, y));
        }
    }
    Ok(accepted)
}

//! Soft rasterization of vector documents and the losses driving
//! optimization, with closed-form gradients for every control point
//! coordinate and fill channel.
//!
//! Each path is flattened to a closed polygon; per-pixel coverage is a
//! linear ramp of the signed distance to that polygon, so the whole render
//! is differentiable in the flattened vertices and therefore (through the
//! Bernstein weights) in the cubic control points.

use crate::error::{Error, Result};
use crate::geom::{Point, Rgb};
use crate::num::Real;
use crate::raster::RasterImage;
use crate::svg::{BezierPath, CubicSegment, VectorDocument};

/// Rasterization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig<T = f64> {
    /// Polyline subdivisions per cubic segment.
    pub flatten_steps: usize,
    /// Soft-edge half-width in pixels: coverage ramps from 1 to 0 as the
    /// signed distance runs from `-smoothing` to `+smoothing`.
    pub smoothing: T,
}

impl<T: Real> Default for RenderConfig<T> {
    fn default() -> Self {
        RenderConfig {
            flatten_steps: 16,
            smoothing: T::of(1.0),
        }
    }
}

impl<T: Real> RenderConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.flatten_steps < 2 {
            return Err(Error::invalid("flatten_steps must be >= 2"));
        }
        if !(self.smoothing > T::zero()) {
            return Err(Error::invalid("smoothing must be positive"));
        }
        Ok(())
    }
}

/// Loss derivatives mirroring the document structure: per path, one 2D
/// derivative per distinct control point (anchor, handle, handle per
/// segment) plus one per fill channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f64> {
    pub paths: Vec<PathGradient<T>>,
}

/// Derivatives (or parameter values) for one path.
///
/// `points[3i]` is segment `i`'s start anchor, `points[3i + 1]` and
/// `points[3i + 2]` its handles; segment `i`'s end anchor is
/// `points[3 * ((i + 1) % n)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGradient<T = f64> {
    pub points: Vec<Point<T>>,
    pub fill: Rgb<T>,
}

impl<T: Real> Gradients<T> {
    /// Zero gradients shaped like `doc`.
    pub fn zeros_like(doc: &VectorDocument<T>) -> Self {
        Gradients {
            paths: doc
                .paths
                .iter()
                .map(|p| PathGradient {
                    points: vec![Point::zero(); p.distinct_point_count()],
                    fill: [T::zero(); 3],
                })
                .collect(),
        }
    }
}

/// Extracts the free parameters of a document: per path, the distinct
/// control points in slot order plus the fill.
pub fn doc_to_params<T: Real>(doc: &VectorDocument<T>) -> Vec<PathGradient<T>> {
    doc.paths
        .iter()
        .map(|path| {
            let mut points = Vec::with_capacity(path.distinct_point_count());
            for seg in path.segments() {
                points.push(seg.p0);
                points.push(seg.p1);
                points.push(seg.p2);
            }
            PathGradient {
                points,
                fill: path.fill,
            }
        })
        .collect()
}

/// Rebuilds a document from parameters produced by [`doc_to_params`]; the
/// shared anchors guarantee the closure invariant by construction.
pub fn params_to_doc<T: Real>(
    width: usize,
    height: usize,
    params: &[PathGradient<T>],
) -> Result<VectorDocument<T>> {
    let mut doc = VectorDocument::new(width, height);
    for param in params {
        if param.points.len() % 3 != 0 || param.points.is_empty() {
            return Err(Error::invalid("path parameters must hold 3 points per segment"));
        }
        let n = param.points.len() / 3;
        let segments = (0..n)
            .map(|i| {
                CubicSegment::new(
                    param.points[3 * i],
                    param.points[3 * i + 1],
                    param.points[3 * i + 2],
                    param.points[3 * ((i + 1) % n)],
                )
            })
            .collect();
        doc.paths.push(BezierPath::new(segments, param.fill)?);
    }
    Ok(doc)
}

/// Flattened form of one path: polygon vertices plus the Bernstein weights
/// tying each vertex back to its segment's control points.
struct FlatPath<T> {
    verts: Vec<Point<T>>,
    /// Per vertex: owning segment and weights for (start anchor, handle 1,
    /// handle 2, end anchor).
    weights: Vec<(usize, [T; 4])>,
    fill: Rgb<T>,
    segment_count: usize,
    /// Pixel ranges (inclusive) that can have nonzero coverage.
    x_range: (usize, usize),
    y_range: (usize, usize),
}

fn flatten_path<T: Real>(
    path: &BezierPath<T>,
    steps: usize,
    smoothing: T,
    width: usize,
    height: usize,
) -> FlatPath<T> {
    let n = path.segments().len();
    let mut verts = Vec::with_capacity(n * steps);
    let mut weights = Vec::with_capacity(n * steps);
    let three = T::of(3.0);
    for (si, seg) in path.segments().iter().enumerate() {
        for j in 0..steps {
            let t = T::of_usize(j) / T::of_usize(steps);
            let s = T::one() - t;
            let w = [s * s * s, three * s * s * t, three * s * t * t, t * t * t];
            verts.push(
                seg.p0.scale(w[0]) + seg.p1.scale(w[1]) + seg.p2.scale(w[2]) + seg.p3.scale(w[3]),
            );
            weights.push((si, w));
        }
    }

    let mut min = verts[0];
    let mut max = verts[0];
    for v in &verts {
        min.x = min.x.min(v.x);
        min.y = min.y.min(v.y);
        max.x = max.x.max(v.x);
        max.y = max.y.max(v.y);
    }
    let margin = smoothing.to_f64_lossy() + 1.0;
    let clamp_px = |v: f64, upper: usize| -> usize {
        v.max(0.0).min(upper.saturating_sub(1) as f64) as usize
    };
    let x0 = clamp_px((min.x.to_f64_lossy() - margin).floor(), width);
    let x1 = clamp_px((max.x.to_f64_lossy() + margin).ceil(), width);
    let y0 = clamp_px((min.y.to_f64_lossy() - margin).floor(), height);
    let y1 = clamp_px((max.y.to_f64_lossy() + margin).ceil(), height);

    FlatPath {
        verts,
        weights,
        fill: path.fill,
        segment_count: n,
        x_range: (x0, x1),
        y_range: (y0, y1),
    }
}

impl<T: Real> FlatPath<T> {
    fn covers(&self, x: usize, y: usize) -> bool {
        x >= self.x_range.0 && x <= self.x_range.1 && y >= self.y_range.0 && y <= self.y_range.1
    }
}

/// Closest-boundary information for one pixel against one polygon.
struct DistInfo<T> {
    /// Signed distance: negative inside (even-odd crossing parity).
    sd: T,
    /// Index of the closest edge's first vertex.
    edge: usize,
    /// Clamped projection parameter along that edge.
    t: T,
    /// Vector from the closest boundary point to the pixel.
    away: Point<T>,
    dist: T,
}

fn distance_info<T: Real>(p: Point<T>, verts: &[Point<T>]) -> DistInfo<T> {
    let n = verts.len();
    let mut best_d2 = T::infinity();
    let mut best = (0usize, T::zero(), Point::zero());
    let mut inside = false;
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        let ab = b - a;
        let len2 = ab.dot(ab);
        let t = if len2 > T::zero() {
            ((p - a).dot(ab) / len2).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        let q = a + ab.scale(t);
        let diff = p - q;
        let d2 = diff.dot(diff);
        if d2 < best_d2 {
            best_d2 = d2;
            best = (i, t, q);
        }
        // Even-odd crossing parity against the +x ray (half-open rule).
        if (a.y > p.y) != (b.y > p.y) {
            let x_int = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_int {
                inside = !inside;
            }
        }
    }
    let dist = best_d2.sqrt();
    let sd = if inside { -dist } else { dist };
    DistInfo {
        sd,
        edge: best.0,
        t: best.1,
        away: p - best.2,
        dist,
    }
}

fn coverage<T: Real>(sd: T, smoothing: T) -> T {
    (T::of(0.5) - sd / (smoothing + smoothing))
        .max(T::zero())
        .min(T::one())
}

fn pixel_center<T: Real>(x: usize, y: usize) -> Point<T> {
    Point::new(
        T::of_usize(x) + T::of(0.5),
        T::of_usize(y) + T::of(0.5),
    )
}

/// Rasterizes the document at `w` x `h`: paths are composited back-to-front
/// over a white background with per-pixel soft coverage.
pub fn render<T: Real>(
    doc: &VectorDocument<T>,
    width: usize,
    height: usize,
    cfg: &RenderConfig<T>,
) -> Result<RasterImage<T>> {
    cfg.validate()?;
    let mut data = vec![[T::one(); 3]; width * height];
    for path in &doc.paths {
        let flat = flatten_path(path, cfg.flatten_steps, cfg.smoothing, width, height);
        for y in flat.y_range.0..=flat.y_range.1 {
            for x in flat.x_range.0..=flat.x_range.1 {
                let info = distance_info(pixel_center(x, y), &flat.verts);
                let alpha = coverage(info.sd, cfg.smoothing);
                let px = &mut data[y * width + x];
                for c in 0..3 {
                    px[c] = alpha * flat.fill[c] + (T::one() - alpha) * px[c];
                }
            }
        }
    }
    RasterImage::new(width, height, data)
}

/// Mean squared difference over all pixels and channels.
pub fn mse_loss<T: Real>(render: &RasterImage<T>, target: &RasterImage<T>) -> Result<T> {
    if !render.same_dims(target) {
        return Err(Error::dimension("mse_loss: size mismatch"));
    }
    let mut sum = T::zero();
    for (r, t) in render.pixels().iter().zip(target.pixels()) {
        for c in 0..3 {
            let d = r[c] - t[c];
            sum = sum + d * d;
        }
    }
    Ok(sum / T::of_usize(3 * render.width() * render.height()))
}

/// Self-interaction regularizer: mean over all cubic segments of
/// `sigma * relu(-cos) + (1 - sigma) * relu(cos)` where `cos` is the angle
/// between the control edges `p1 - p0` and `p3 - p2` and `sigma` flags a
/// positive 2D cross product. Degenerate zero-length edges contribute 0.
pub fn xing_loss<T: Real>(doc: &VectorDocument<T>) -> T {
    let mut sum = T::zero();
    let mut count = 0usize;
    for path in &doc.paths {
        for seg in path.segments() {
            sum = sum + segment_xing(seg).0;
            count += 1;
        }
    }
    if count == 0 {
        T::zero()
    } else {
        sum / T::of_usize(count)
    }
}

/// Value and `d value / d cos` for one segment, plus the edge geometry
/// needed by the gradient.
fn segment_xing<T: Real>(seg: &CubicSegment<T>) -> (T, T, Point<T>, Point<T>, T, T) {
    let u = seg.p1 - seg.p0;
    let v = seg.p3 - seg.p2;
    let nu = u.norm();
    let nv = v.norm();
    if nu == T::zero() || nv == T::zero() {
        return (T::zero(), T::zero(), u, v, nu, nv);
    }
    let cos = u.dot(v) / (nu * nv);
    let sigma_pos = u.cross(v) > T::zero();
    let (value, dcos) = if sigma_pos {
        if cos < T::zero() {
            (-cos, -T::one())
        } else {
            (T::zero(), T::zero())
        }
    } else if cos > T::zero() {
        (cos, T::one())
    } else {
        (T::zero(), T::zero())
    };
    (value, dcos, u, v, nu, nv)
}

/// Total loss `mse + lambda_xing * xing` with analytic gradients for every
/// control point coordinate and fill channel.
pub fn total_loss<T: Real>(
    doc: &VectorDocument<T>,
    target: &RasterImage<T>,
    cfg: &RenderConfig<T>,
    lambda_xing: T,
) -> Result<(T, Gradients<T>)> {
    cfg.validate()?;
    let (width, height) = (target.width(), target.height());
    let flats: Vec<FlatPath<T>> = doc
        .paths
        .iter()
        .map(|p| flatten_path(p, cfg.flatten_steps, cfg.smoothing, width, height))
        .collect();
    let mut grads = Gradients::zeros_like(doc);
    let eps = cfg.smoothing;
    let two = T::of(2.0);
    let inv_count = T::one() / T::of_usize(3 * width * height);

    let mut mse_sum = T::zero();
    // Reused per-pixel scratch: covering path index, alpha, distance info,
    // and the composited color just below that path.
    let mut covering: Vec<(usize, T, DistInfo<T>, Rgb<T>)> = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let p = pixel_center(x, y);
            covering.clear();
            let mut color = [T::one(); 3];
            for (i, flat) in flats.iter().enumerate() {
                if !flat.covers(x, y) {
                    continue;
                }
                let info = distance_info(p, &flat.verts);
                let alpha = coverage(info.sd, eps);
                covering.push((i, alpha, info, color));
                for c in 0..3 {
                    color[c] = alpha * flat.fill[c] + (T::one() - alpha) * color[c];
                }
            }
            let t_px = target.pixel(x, y);
            let mut dl_dout = [T::zero(); 3];
            for c in 0..3 {
                let d = color[c] - t_px[c];
                mse_sum = mse_sum + d * d;
                dl_dout[c] = two * d * inv_count;
            }
            // Back-to-front transmittance accumulation.
            let mut trans = T::one();
            for (i, alpha, info, below) in covering.iter().rev() {
                let flat = &flats[*i];
                let pg = &mut grads.paths[*i];
                let mut d_alpha = T::zero();
                for c in 0..3 {
                    pg.fill[c] = pg.fill[c] + dl_dout[c] * *alpha * trans;
                    d_alpha = d_alpha + dl_dout[c] * (flat.fill[c] - below[c]) * trans;
                }
                if info.sd.abs() < eps && info.dist > T::of(1e-12) {
                    // alpha = 0.5 - sd / (2 eps) inside the ramp.
                    let d_sd = -d_alpha / (eps + eps);
                    let sign = if info.sd < T::zero() { -T::one() } else { T::one() };
                    let unit = info.away.scale(T::one() / info.dist);
                    // Envelope theorem: distance to the segment (a, b) has
                    // d/da = -(1 - t) u, d/db = -t u for the clamped t.
                    let ga = unit.scale(-d_sd * sign * (T::one() - info.t));
                    let gb = unit.scale(-d_sd * sign * info.t);
                    let n_verts = flat.verts.len();
                    accumulate_vertex_gradient(pg, flat, info.edge, ga);
                    accumulate_vertex_gradient(pg, flat, (info.edge + 1) % n_verts, gb);
                }
                trans = trans * (T::one() - *alpha);
            }
        }
    }
    let mse = mse_sum * inv_count;

    // Xing term: value plus gradients through the control edges.
    let total_segments: usize = doc.paths.iter().map(|p| p.segments().len()).sum();
    let mut xing_sum = T::zero();
    if total_segments > 0 && lambda_xing != T::zero() {
        let seg_scale = lambda_xing / T::of_usize(total_segments);
        for (pi, path) in doc.paths.iter().enumerate() {
            let n = path.segments().len();
            for (si, seg) in path.segments().iter().enumerate() {
                let (value, dcos, u, v, nu, nv) = segment_xing(seg);
                xing_sum = xing_sum + value;
                if dcos == T::zero() {
                    continue;
                }
                let cos = u.dot(v) / (nu * nv);
                let du = (v.scale(T::one() / nv) - u.scale(cos / nu)).scale(T::one() / nu);
                let dv = (u.scale(T::one() / nu) - v.scale(cos / nv)).scale(T::one() / nv);
                let scale = seg_scale * dcos;
                let pg = &mut grads.paths[pi];
                // u = p1 - p0, v = p3 - p2.
                pg.points[3 * si] += du.scale(-scale);
                pg.points[3 * si + 1] += du.scale(scale);
                pg.points[3 * si + 2] += dv.scale(-scale);
                pg.points[3 * ((si + 1) % n)] += dv.scale(scale);
            }
        }
    } else if total_segments > 0 {
        for path in &doc.paths {
            for seg in path.segments() {
                xing_sum = xing_sum + segment_xing(seg).0;
            }
        }
    }
    let xing = if total_segments == 0 {
        T::zero()
    } else {
        xing_sum / T::of_usize(total_segments)
    };

    Ok((mse + lambda_xing * xing, grads))
}

/// Routes a flattened-vertex gradient back to the four control points of
/// the owning segment through its Bernstein weights.
fn accumulate_vertex_gradient<T: Real>(
    pg: &mut PathGradient<T>,
    flat: &FlatPath<T>,
    vert: usize,
    grad: Point<T>,
) {
    let (seg, w) = flat.weights[vert];
    let n = flat.segment_count;
    pg.points[3 * seg] += grad.scale(w[0]);
    pg.points[3 * seg + 1] += grad.scale(w[1]);
    pg.points[3 * seg + 2] += grad.scale(w[2]);
    pg.points[3 * ((seg + 1) % n)] += grad.scale(w[3]);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_path<T: Real>(x0: f64, y0: f64, side: f64, fill: Rgb<T>) -> BezierPath<T> {
        let corners = [
            Point::new(T::of(x0), T::of(y0)),
            Point::new(T::of(x0 + side), T::of(y0)),
            Point::new(T::of(x0 + side), T::of(y0 + side)),
            Point::new(T::of(x0), T::of(y0 + side)),
        ];
        let segments = (0..4)
            .map(|i| CubicSegment::line(corners[i], corners[(i + 1) % 4]))
            .collect();
        BezierPath::new(segments, fill).unwrap()
    }

    #[test]
    fn empty_document_renders_white() {
        let doc = VectorDocument::<f64>::new(8, 8);
        let img = render(&doc, 8, 8, &RenderConfig::default()).unwrap();
        assert!(img.pixels().iter().all(|p| *p == [1.0, 1.0, 1.0]));
    }

    #[test]
    fn full_canvas_rectangle_interior_is_exact() {
        let mut doc = VectorDocument::<f64>::new(16, 16);
        doc.paths.push(square_path(0.0, 0.0, 16.0, [0.0, 0.0, 0.0]));
        let img = render(&doc, 16, 16, &RenderConfig::default()).unwrap();
        // Pixels deeper than the smoothing band are exactly the fill.
        assert_eq!(img.pixel(8, 8), [0.0, 0.0, 0.0]);
        assert_eq!(img.pixel(4, 10), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn square_coverage_matches_point_in_polygon() {
        let mut doc = VectorDocument::<f64>::new(24, 24);
        doc.paths.push(square_path(6.0, 6.0, 10.0, [0.0, 0.0, 0.0]));
        let cfg = RenderConfig::default();
        let img = render(&doc, 24, 24, &cfg).unwrap();
        for y in 0..24usize {
            for x in 0..24usize {
                let cx = x as f64 + 0.5;
                let cy = y as f64 + 0.5;
                let inside = cx > 6.0 && cx < 16.0 && cy > 6.0 && cy < 16.0;
                // Distance from the pixel center to the square's boundary.
                let dx = (6.0 - cx).max(cx - 16.0);
                let dy = (6.0 - cy).max(cy - 16.0);
                let sd = if inside {
                    dx.max(dy) // negative
                } else {
                    let ox = dx.max(0.0);
                    let oy = dy.max(0.0);
                    (ox * ox + oy * oy).sqrt()
                };
                if sd.abs() > cfg.smoothing {
                    let expected = if inside { 0.0 } else { 1.0 };
                    assert_eq!(img.pixel(x, y)[0], expected, "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn coverage_is_monotone_and_saturates() {
        let eps = 1.0f64;
        let mut prev = f64::INFINITY;
        for i in -30..=30 {
            let sd = i as f64 / 10.0;
            let a = coverage(sd, eps);
            assert!(a <= prev);
            prev = a;
            if sd <= -eps {
                assert_eq!(a, 1.0);
            }
            if sd >= eps {
                assert_eq!(a, 0.0);
            }
        }
    }

    #[test]
    fn mse_loss_examples() {
        let white = RasterImage::<f64>::filled(2, 2, [1.0; 3]);
        let black = RasterImage::<f64>::filled(2, 2, [0.0; 3]);
        assert_eq!(mse_loss(&white, &white).unwrap(), 0.0);
        assert_eq!(mse_loss(&white, &black).unwrap(), 1.0);

        let mut off = white.clone();
        off.pixel_mut(0, 0)[1] = 0.5;
        let expected = 0.25 / 12.0;
        assert!((mse_loss(&off, &white).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn xing_loss_hand_cases() {
        // Straight segment: control edges parallel, same direction, zero
        // cross product -> sigma = 0, relu(cos 0deg) = 1.
        let a = Point::new(0.0, 0.0);
        let b = Point::new(3.0, 0.0);
        let straight = CubicSegment::line(a, b);
        // Closing segment built to contribute zero: cross(u, v) > 0 and
        // cos > 0 -> relu(-cos) = 0.
        let closing = CubicSegment::new(
            b,
            Point::new(2.0, 0.5),
            Point::new(1.0, 0.5),
            a,
        );
        let (v_open, ..) = segment_xing(&straight);
        let (v_close, ..) = segment_xing(&closing);
        assert_eq!(v_open, 1.0);
        assert_eq!(v_close, 0.0);

        let path = BezierPath::new(vec![straight, closing], [0.0; 3]).unwrap();
        let mut doc = VectorDocument::<f64>::new(8, 8);
        doc.paths.push(path);
        assert_eq!(xing_loss(&doc), 0.5);

        // Perpendicular control edges: cos = 0, both relu terms vanish.
        let perp = CubicSegment::new(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, -1.0),
            Point::new(2.0, 2.0),
        );
        assert_eq!(segment_xing(&perp).0, 0.0);

        // Empty document.
        assert_eq!(xing_loss(&VectorDocument::<f64>::new(4, 4)), 0.0);
    }

    #[test]
    fn xing_invariant_under_translation_and_scale() {
        let mut doc = VectorDocument::<f64>::new(32, 32);
        doc.paths.push(BezierPath::new(
            vec![
                CubicSegment::new(
                    Point::new(2.0, 3.0),
                    Point::new(7.0, 1.0),
                    Point::new(11.0, 9.0),
                    Point::new(14.0, 4.0),
                ),
                CubicSegment::new(
                    Point::new(14.0, 4.0),
                    Point::new(9.0, 14.0),
                    Point::new(4.0, 12.0),
                    Point::new(2.0, 3.0),
                ),
            ],
            [0.5; 3],
        )
        .unwrap());
        let base = xing_loss(&doc);
        let transform = |doc: &VectorDocument<f64>, s: f64, dx: f64, dy: f64| {
            let mut out = doc.clone();
            for p in &mut out.paths {
                let segs: Vec<CubicSegment<f64>> = p
                    .segments()
                    .iter()
                    .map(|seg| {
                        let m = |q: Point<f64>| Point::new(q.x * s + dx, q.y * s + dy);
                        CubicSegment::new(m(seg.p0), m(seg.p1), m(seg.p2), m(seg.p3))
                    })
                    .collect();
                *p = BezierPath::new(segs, p.fill).unwrap();
            }
            out
        };
        assert!((xing_loss(&transform(&doc, 1.0, 13.0, -4.0)) - base).abs() < 1e-12);
        assert!((xing_loss(&transform(&doc, 3.5, 0.0, 0.0)) - base).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_equals_mse_exactly() {
        let mut doc = VectorDocument::<f64>::new(12, 12);
        doc.paths.push(square_path(2.0, 2.0, 7.0, [0.2, 0.7, 0.4]));
        let target = RasterImage::<f64>::filled(12, 12, [0.9; 3]);
        let cfg = RenderConfig::default();
        let (loss, _) = total_loss(&doc, &target, &cfg, 0.0).unwrap();
        let rendered = render(&doc, 12, 12, &cfg).unwrap();
        assert_eq!(loss, mse_loss(&rendered, &target).unwrap());
    }

    #[test]
    fn exact_match_has_zero_mse_gradient() {
        let mut doc = VectorDocument::<f64>::new(12, 12);
        doc.paths.push(square_path(3.0, 3.0, 6.0, [0.3, 0.3, 0.3]));
        let cfg = RenderConfig::default();
        let target = render(&doc, 12, 12, &cfg).unwrap();
        let (loss, grads) = total_loss(&doc, &target, &cfg, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        for pg in &grads.paths {
            assert!(pg.fill.iter().all(|g| *g == 0.0));
            assert!(pg.points.iter().all(|g| g.x == 0.0 && g.y == 0.0));
        }
    }

    #[test]
    fn translation_leaves_mse_unchanged() {
        let cfg = RenderConfig::default();
        let mut doc = VectorDocument::<f64>::new(32, 32);
        doc.paths.push(square_path(4.0, 6.0, 9.0, [0.1, 0.5, 0.9]));
        let target = render(&doc, 32, 32, &cfg).unwrap();
        let base = mse_loss(&render(&doc, 32, 32, &cfg).unwrap(), &target).unwrap();

        let mut shifted = VectorDocument::<f64>::new(32, 32);
        shifted.paths.push(square_path(9.0, 13.0, 9.0, [0.1, 0.5, 0.9]));
        let shifted_target = {
            let mut data = vec![[1.0f64; 3]; 32 * 32];
            for y in 0..32usize {
                for x in 0..32usize {
                    if x >= 5 && y >= 7 {
                        data[y * 32 + x] = target.pixel(x - 5, y - 7);
                    }
                }
            }
            RasterImage::new(32, 32, data).unwrap()
        };
        let moved = mse_loss(&render(&shifted, 32, 32, &cfg).unwrap(), &shifted_target).unwrap();
        assert!((moved - base).abs() < 1e-9, "{moved} vs {base}");
    }

    #[test]
    fn gradient_matches_finite_differences_smoke() {
        let mut doc = VectorDocument::<f64>::new(16, 16);
        doc.paths.push(BezierPath::new(
            vec![
                CubicSegment::new(
                    Point::new(3.0, 4.0),
                    Point::new(6.0, 2.0),
                    Point::new(10.0, 3.0),
                    Point::new(12.0, 7.0),
                ),
                CubicSegment::new(
                    Point::new(12.0, 7.0),
                    Point::new(10.0, 12.0),
                    Point::new(5.0, 12.0),
                    Point::new(3.0, 4.0),
                ),
            ],
            [0.2, 0.6, 0.8],
        )
        .unwrap());
        let target = RasterImage::<f64>::from_fn(16, 16, |x, y| {
            [
                (x as f64 / 15.0 * 255.0).round() / 255.0,
                (y as f64 / 15.0 * 255.0).round() / 255.0,
                0.5,
            ]
        });
        let cfg = RenderConfig::default();
        let lambda = 0.01;
        let (_, grads) = total_loss(&doc, &target, &cfg, lambda).unwrap();
        let params = doc_to_params(&doc);
        let h = 1e-3;
        let mut checked = 0;
        let mut ok = 0;
        for (pi, pg) in params.iter().enumerate() {
            for (ptidx, _) in pg.points.iter().enumerate() {
                for axis in 0..2 {
                    let eval = |delta: f64| {
                        let mut perturbed = params.clone();
                        let p = &mut perturbed[pi].points[ptidx];
                        if axis == 0 {
                            p.x += delta;
                        } else {
                            p.y += delta;
                        }
                        let d = params_to_doc(16, 16, &perturbed).unwrap();
                        total_loss(&d, &target, &cfg, lambda).unwrap().0
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let g = if axis == 0 {
                        grads.paths[pi].points[ptidx].x
                    } else {
                        grads.paths[pi].points[ptidx].y
                    };
                    if g.abs() > 1e-6 {
                        checked += 1;
                        let rel = (fd - g).abs() / g.abs().max(fd.abs());
                        if rel < 1e-2 {
                            ok += 1;
                        }
                    }
                }
            }
            for c in 0..3 {
                let eval = |delta: f64| {
                    let mut perturbed = params.clone();
                    perturbed[pi].fill[c] += delta;
                    let d = params_to_doc(16, 16, &perturbed).unwrap();
                    total_loss(&d, &target, &cfg, lambda).unwrap().0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let g = grads.paths[pi].fill[c];
                if g.abs() > 1e-6 {
                    checked += 1;
                    let rel = (fd - g).abs() / g.abs().max(fd.abs());
                    if rel < 1e-2 {
                        ok += 1;
                    }
                }
            }
        }
        assert!(checked > 10, "too few active coordinates ({checked})");
        assert!(
            ok as f64 >= checked as f64 * 0.95,
            "only {ok}/{checked} gradients matched"
        );
    }

    #[test]
    fn params_round_trip() {
        let mut doc = VectorDocument::<f64>::new(20, 20);
        doc.paths.push(square_path(2.0, 2.0, 9.0, [0.4, 0.2, 0.8]));
        doc.paths.push(square_path(5.0, 5.0, 4.0, [0.9, 0.9, 0.1]));
        let params = doc_to_params(&doc);
        let back = params_to_doc(20, 20, &params).unwrap();
        assert_eq!(doc, back);
    }
}

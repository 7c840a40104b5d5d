//! Mask tracing: boundary extraction, corner selection by repeated global
//! maxima with suppression, and least-squares cubic fitting between corners.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::num::Real;
use crate::raster::RasterImage;
use crate::segment::Mask;
use crate::select::mean_color;
use crate::svg::{BezierPath, CubicSegment};

/// Smallest mask area worth tracing.
pub const MIN_TRACEABLE_AREA: usize = 16;

/// Closed boundary of one mask component.
///
/// Points produced by [`extract_contour`] are pixel coordinates, consecutive
/// points 8-adjacent, oriented counter-clockwise (positive shoelace sum);
/// the last point connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour<T = f64> {
    points: Vec<Point<T>>,
}

impl<T: Real> Contour<T> {
    pub fn new(points: Vec<Point<T>>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::invalid("contour needs at least 3 points"));
        }
        Ok(Contour { points })
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Twice the signed area (shoelace sum) of the closed polygon.
    fn shoelace(&self) -> T {
        let mut sum = T::zero();
        for i in 0..self.points.len() {
            let a = self.points[i];
            let b = self.points[(i + 1) % self.points.len()];
            sum = sum + a.cross(b);
        }
        sum
    }
}

/// Moore-neighborhood ring around a pixel, starting west and stepping
/// clockwise in image coordinates (y grows downward).
const RING: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn ring_index(offset: (i64, i64)) -> usize {
    RING.iter()
        .position(|o| *o == offset)
        .expect("offset is a Moore neighbor")
}

/// Extracts one outer-boundary contour per 4-connected mask component via
/// Moore-neighbor tracing. Components below [`MIN_TRACEABLE_AREA`] are
/// skipped; holes are ignored (cleaning has filled the small ones).
pub fn extract_contour<T: Real>(mask: &Mask) -> Result<Vec<Contour<T>>> {
    if mask.area() < MIN_TRACEABLE_AREA {
        return Err(Error::invalid(format!(
            "mask area {} below minimum traceable area {MIN_TRACEABLE_AREA}",
            mask.area()
        )));
    }
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![usize::MAX; w * h];
    let mut components: Vec<(usize, (usize, usize))> = Vec::new(); // (size, start)
    for sy in 0..h {
        for sx in 0..w {
            if !mask.get(sx, sy) || labels[sy * w + sx] != usize::MAX {
                continue;
            }
            let label = components.len();
            labels[sy * w + sx] = label;
            let mut size = 0usize;
            let mut queue = std::collections::VecDeque::from([(sx, sy)]);
            while let Some((x, y)) = queue.pop_front() {
                size += 1;
                for (nx, ny) in crate::raster::neighbors4(x, y, w, h) {
                    if mask.get(nx, ny) && labels[ny * w + nx] == usize::MAX {
                        labels[ny * w + nx] = label;
                        queue.push_back((nx, ny));
                    }
                }
            }
            components.push((size, (sx, sy)));
        }
    }

    let mut contours = Vec::new();
    for (label, &(size, start)) in components.iter().enumerate() {
        if size < MIN_TRACEABLE_AREA {
            continue;
        }
        let in_comp = |x: i64, y: i64| -> bool {
            x >= 0
                && y >= 0
                && (x as usize) < w
                && (y as usize) < h
                && labels[y as usize * w + x as usize] == label
        };
        let points = moore_trace(start, size, in_comp);
        if points.len() < 3 {
            continue;
        }
        let mut contour = Contour::new(
            points
                .into_iter()
                .map(|(x, y)| Point::new(T::of(x as f64), T::of(y as f64)))
                .collect(),
        )?;
        if contour.shoelace() < T::zero() {
            contour.points[1..].reverse();
        }
        contours.push(contour);
    }
    Ok(contours)
}

/// Follows the outer boundary starting at the component's row-major first
/// pixel, entering from the west. Stops when the start pixel is re-entered
/// with the starting backtrack (Jacob's criterion).
fn moore_trace(
    start: (usize, usize),
    size: usize,
    in_comp: impl Fn(i64, i64) -> bool,
) -> Vec<(i64, i64)> {
    let start = (start.0 as i64, start.1 as i64);
    let start_back = (start.0 - 1, start.1);
    let mut p = start;
    let mut back = start_back;
    let mut points = Vec::new();
    let cap = 8 * size + 8;
    loop {
        points.push(p);
        let from = ring_index((back.0 - p.0, back.1 - p.1));
        let mut found = None;
        for step in 1..=8 {
            let off = RING[(from + step) % 8];
            let cand = (p.0 + off.0, p.1 + off.1);
            if in_comp(cand.0, cand.1) {
                found = Some(cand);
                break;
            }
            back = cand;
        }
        match found {
            Some(next) => p = next,
            None => break, // isolated pixel
        }
        if p == start && back == start_back {
            break;
        }
        if points.len() >= cap {
            break;
        }
    }
    points
}

/// Per-point corner strength: `1 - cos(theta_i)` where `theta_i` is the
/// direction change between the chords from point `i-k` to `i` and from `i`
/// to `i+k` (indices cyclic). Straight runs score near 0, right angles near
/// 1, reversals near 2.
pub fn corner_strength<T: Real>(contour: &Contour<T>, k: usize) -> Result<Vec<T>> {
    let n = contour.len();
    if n <= 2 * k {
        return Err(Error::invalid(format!(
            "contour of {n} points too short for k={k}"
        )));
    }
    let pts = contour.points();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let prev = pts[(i + n - k) % n];
        let next = pts[(i + k) % n];
        let v1 = pts[i] - prev;
        let v2 = next - pts[i];
        let d = v1.norm() * v2.norm();
        if d == T::zero() {
            out.push(T::zero());
        } else {
            out.push(T::one() - v1.dot(v2) / d);
        }
    }
    Ok(out)
}

/// Adaptive chord length for [`corner_strength`]: `max(3, ceil(len / 40))`.
pub fn default_k(contour_len: usize) -> usize {
    (contour_len.div_ceil(40)).max(3)
}

/// Picks `n` corner indices by repeatedly taking the global strength maximum
/// (ties to the smallest index) and suppressing candidates within cyclic arc
/// distance `suppress`. Falls back to evenly spaced indices if candidates
/// run out. The result is sorted in contour order.
pub fn select_corners<T: Real>(strengths: &[T], n: usize, suppress: T) -> Result<Vec<usize>> {
    let len = strengths.len();
    if n < 2 {
        return Err(Error::invalid("need at least 2 corners"));
    }
    if len < n {
        return Err(Error::invalid(format!(
            "contour of {len} points cannot host {n} corners"
        )));
    }
    let mut alive = vec![true; len];
    let mut chosen = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for (i, s) in strengths.iter().enumerate() {
            if alive[i] && best.map_or(true, |b| *s > strengths[b]) {
                best = Some(i);
            }
        }
        let Some(pick) = best else { break };
        chosen.push(pick);
        for (j, flag) in alive.iter_mut().enumerate() {
            let diff = pick.abs_diff(j);
            let cyc = diff.min(len - diff);
            if T::of_usize(cyc) < suppress {
                *flag = false;
            }
        }
    }
    // Evenly spaced fill for the remainder.
    let step = len as f64 / n as f64;
    let mut grid = 0usize;
    while chosen.len() < n {
        let mut idx = ((grid as f64 * step).round() as usize) % len;
        while chosen.contains(&idx) {
            idx = (idx + 1) % len;
        }
        chosen.push(idx);
        grid += 1;
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Fits one cubic per corner-to-corner arc by least squares with
/// chord-length parameterization; arc endpoints are clamped to the corner
/// points. Arcs with fewer than two interior points fall back to handles at
/// thirds of the chord. The fill is the mean image color under the mask.
pub fn fit_path<T: Real>(
    contour: &Contour<T>,
    corners: &[usize],
    image: &RasterImage<T>,
    mask: &Mask,
) -> Result<BezierPath<T>> {
    let len = contour.len();
    if corners.len() < 2 {
        return Err(Error::invalid("need at least 2 corners to fit a path"));
    }
    if corners.windows(2).any(|w| w[0] >= w[1]) || corners.iter().any(|c| *c >= len) {
        return Err(Error::invalid("corners must be sorted, distinct, in range"));
    }
    let fill = mean_color(image, mask)?;
    let pts = contour.points();
    let mut segments = Vec::with_capacity(corners.len());
    for ci in 0..corners.len() {
        let from = corners[ci];
        let to = corners[(ci + 1) % corners.len()];
        let span = (to + len - from) % len;
        let arc: Vec<Point<T>> = (0..=span).map(|s| pts[(from + s) % len]).collect();
        segments.push(fit_cubic(&arc));
    }
    BezierPath::new(segments, fill)
}

/// Least-squares cubic through `arc` with clamped endpoints.
fn fit_cubic<T: Real>(arc: &[Point<T>]) -> CubicSegment<T> {
    let a = arc[0];
    let d = arc[arc.len() - 1];
    if arc.len() < 4 {
        return CubicSegment::line(a, d);
    }

    // Chord-length parameterization.
    let mut ts = Vec::with_capacity(arc.len());
    let mut total = T::zero();
    ts.push(T::zero());
    for i in 1..arc.len() {
        total = total + arc[i].distance(arc[i - 1]);
        ts.push(total);
    }
    if total == T::zero() {
        return CubicSegment::line(a, d);
    }
    for t in &mut ts {
        *t = *t / total;
    }

    let three = T::of(3.0);
    let mut m00 = T::zero();
    let mut m01 = T::zero();
    let mut m11 = T::zero();
    let mut r1 = Point::zero();
    let mut r2 = Point::zero();
    for (p, t) in arc.iter().zip(&ts) {
        let s = T::one() - *t;
        let b0 = s * s * s;
        let b1 = three * s * s * *t;
        let b2 = three * s * *t * *t;
        let b3 = *t * *t * *t;
        let resid = *p - a.scale(b0) - d.scale(b3);
        m00 = m00 + b1 * b1;
        m01 = m01 + b1 * b2;
        m11 = m11 + b2 * b2;
        r1 += resid.scale(b1);
        r2 += resid.scale(b2);
    }
    let det = m00 * m11 - m01 * m01;
    if det.abs() <= (m00 * m11).abs() * T::of(1e-9) + T::min_positive_value() {
        return CubicSegment::line(a, d);
    }
    let p1 = Point::new(
        (m11 * r1.x - m01 * r2.x) / det,
        (m11 * r1.y - m01 * r2.y) / det,
    );
    let p2 = Point::new(
        (m00 * r2.x - m01 * r1.x) / det,
        (m00 * r2.y - m01 * r1.y) / det,
    );
    CubicSegment::new(a, p1, p2, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        let mut bits = vec![false; w * h];
        for y in y0..y1 {
            for x in x0..x1 {
                bits[y * w + x] = true;
            }
        }
        Mask::new(w, h, bits).unwrap()
    }

    fn disc_mask(size: usize, cx: f64, cy: f64, r: f64) -> Mask {
        let bits = (0..size * size)
            .map(|i| {
                let x = (i % size) as f64;
                let y = (i / size) as f64;
                ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() <= r
            })
            .collect();
        Mask::new(size, size, bits).unwrap()
    }

    #[test]
    fn square_boundary_pixels() {
        let mask = rect_mask(8, 8, 2, 2, 6, 6);
        let contours: Vec<Contour<f64>> = extract_contour(&mask).unwrap();
        assert_eq!(contours.len(), 1);
        let c = &contours[0];
        assert_eq!(c.len(), 12);
        // Boundary-pixel enumeration oracle: every pixel of the 4x4 block
        // except the 2x2 interior.
        let mut expected: Vec<(f64, f64)> = Vec::new();
        for y in 2..6 {
            for x in 2..6 {
                if x == 2 || x == 5 || y == 2 || y == 5 {
                    expected.push((x as f64, y as f64));
                }
            }
        }
        let mut got: Vec<(f64, f64)> = c.points().iter().map(|p| (p.x, p.y)).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, expected);
        // Consecutive points are 8-adjacent, closure included.
        for i in 0..c.len() {
            let a = c.points()[i];
            let b = c.points()[(i + 1) % c.len()];
            assert!((a.x - b.x).abs() <= 1.0 && (a.y - b.y).abs() <= 1.0);
            assert!(a != b);
        }
        // Counter-clockwise normalization.
        assert!(c.shoelace() > 0.0);
    }

    #[test]
    fn two_components_two_contours() {
        let mut bits = vec![false; 16 * 16];
        for y in 1..6 {
            for x in 1..6 {
                bits[y * 16 + x] = true;
            }
        }
        for y in 9..14 {
            for x in 9..14 {
                bits[y * 16 + x] = true;
            }
        }
        let mask = Mask::new(16, 16, bits).unwrap();
        let contours: Vec<Contour<f64>> = extract_contour(&mask).unwrap();
        assert_eq!(contours.len(), 2);
    }

    #[test]
    fn tiny_mask_is_rejected() {
        let mask = rect_mask(8, 8, 0, 0, 2, 2);
        assert!(extract_contour::<f64>(&mask).is_err());
    }

    #[test]
    fn straight_run_has_zero_strength() {
        // Long thin rectangle: mid-edge points are collinear over +-k.
        let mask = rect_mask(32, 8, 1, 2, 29, 6);
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        let strengths = corner_strength(&contour, 3).unwrap();
        // Find a point in the middle of the top edge.
        let idx = contour
            .points()
            .iter()
            .position(|p| p.y == 2.0 && (p.x - 15.0).abs() < 0.5)
            .unwrap();
        assert!(strengths[idx].abs() < 1e-9);
    }

    #[test]
    fn right_angle_strength_is_one() {
        let mask = rect_mask(16, 16, 2, 2, 12, 12);
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        let strengths = corner_strength(&contour, 3).unwrap();
        let idx = contour
            .points()
            .iter()
            .position(|p| p.x == 2.0 && p.y == 2.0)
            .unwrap();
        // Hand computation at an L vertex: chords are perpendicular,
        // cos 90 deg = 0, strength = 1.
        assert!((strengths[idx] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn circle_strengths_have_no_corner_spikes() {
        let mask = disc_mask(64, 31.5, 31.5, 24.0);
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        let k = default_k(contour.len());
        let strengths = corner_strength(&contour, k).unwrap();
        // Analytic chord angle for an N-gon: 1 - cos(2*pi*k/N); rasterized
        // stair steps add jitter but stay far below a true corner (1.0).
        let n = contour.len() as f64;
        let analytic = 1.0 - (2.0 * std::f64::consts::PI * k as f64 / n).cos();
        let max = strengths.iter().cloned().fold(0.0, f64::max);
        assert!(max < analytic + 0.35, "max {max}, analytic {analytic}");
    }

    #[test]
    fn square_corners_selected() {
        let mask = rect_mask(16, 16, 3, 3, 12, 12);
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        let strengths = corner_strength(&contour, 3).unwrap();
        let suppress = contour.len() as f64 / 8.0;
        let corners = select_corners(&strengths, 4, suppress).unwrap();
        let mut coords: Vec<(f64, f64)> = corners
            .iter()
            .map(|i| (contour.points()[*i].x, contour.points()[*i].y))
            .collect();
        coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            coords,
            vec![(3.0, 3.0), (3.0, 11.0), (11.0, 3.0), (11.0, 11.0)]
        );
    }

    #[test]
    fn equal_strengths_spread_by_suppression() {
        let strengths = vec![1.0f64; 40];
        let corners = select_corners(&strengths, 4, 5.0).unwrap();
        assert_eq!(corners.len(), 4);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let diff = corners[i].abs_diff(corners[j]);
                let cyc = diff.min(40 - diff) as f64;
                assert!(cyc >= 5.0, "{corners:?}");
            }
        }
    }

    #[test]
    fn ellipse_ends_are_corners() {
        // Elongated ellipse: the two high-curvature ends win with n=2.
        let bits = (0..64 * 24)
            .map(|i| {
                let x = (i % 64) as f64 - 31.5;
                let y = (i / 64) as f64 - 11.5;
                (x / 28.0).powi(2) + (y / 7.0).powi(2) <= 1.0
            })
            .collect();
        let mask = Mask::new(64, 24, bits).unwrap();
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        let k = default_k(contour.len());
        let strengths = corner_strength(&contour, k).unwrap();
        let suppress = contour.len() as f64 / 4.0;
        let corners = select_corners(&strengths, 2, suppress).unwrap();
        for i in corners {
            let p = contour.points()[i];
            assert!(
                (p.x - 31.5).abs() > 20.0,
                "corner {p:?} should sit near an ellipse end"
            );
        }
    }

    #[test]
    fn fallback_fills_evenly() {
        // Huge suppression wipes every candidate after the first pick.
        let strengths = vec![1.0f64; 12];
        let corners = select_corners(&strengths, 4, 100.0).unwrap();
        assert_eq!(corners.len(), 4);
        let mut sorted = corners.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
    }

    #[test]
    fn fit_square_stays_within_a_pixel() {
        let mask = rect_mask(16, 16, 3, 3, 12, 12);
        let image = RasterImage::<f64>::filled(16, 16, [0.25, 0.5, 0.75]);
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        let strengths = corner_strength(&contour, 3).unwrap();
        let corners = select_corners(&strengths, 4, contour.len() as f64 / 8.0).unwrap();
        let path = fit_path(&contour, &corners, &image, &mask).unwrap();
        assert_eq!(path.segments().len(), 4);
        assert_eq!(path.fill, [0.25, 0.5, 0.75]);
        // Point-to-curve distance oracle: every contour point within 1 px of
        // the densely sampled path.
        let max_dev = max_contour_deviation(&contour, &path);
        assert!(max_dev < 1.0, "max deviation {max_dev}");
    }

    #[test]
    fn fit_circle_four_arcs() {
        let size = 48;
        let mask = disc_mask(size, 23.5, 23.5, 20.0);
        let image = RasterImage::<f64>::filled(size, size, [1.0, 0.0, 0.0]);
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        let len = contour.len();
        let corners = vec![0, len / 4, len / 2, 3 * len / 4];
        let path = fit_path(&contour, &corners, &image, &mask).unwrap();
        // The 4-arc cubic circle approximation plus pixel jitter stays well
        // inside one pixel of the ideal radius.
        for seg in path.segments() {
            for step in 0..=64 {
                let p = seg.eval(step as f64 / 64.0);
                let r = ((p.x - 23.5).powi(2) + (p.y - 23.5).powi(2)).sqrt();
                assert!((r - 20.0).abs() < 1.0, "radius {r}");
            }
        }
    }

    #[test]
    fn two_point_arc_is_exact_chord() {
        let mask = rect_mask(16, 16, 3, 3, 12, 12);
        let image = RasterImage::<f64>::filled(16, 16, [0.5; 3]);
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        // Corners 0 and 1 are adjacent: the first arc has two points.
        let corners = vec![0, 1, contour.len() / 2];
        let path = fit_path(&contour, &corners, &image, &mask).unwrap();
        let seg = path.segments()[0];
        let chord = seg.p3 - seg.p0;
        assert_eq!(seg.p1, seg.p0 + chord.scale(1.0 / 3.0));
        assert_eq!(seg.p2, seg.p0 + chord.scale(2.0 / 3.0));
    }

    #[test]
    fn path_closure_invariant() {
        let mask = disc_mask(32, 15.5, 15.5, 11.0);
        let image = RasterImage::<f64>::filled(32, 32, [0.5; 3]);
        let contour: Contour<f64> = extract_contour(&mask).unwrap().remove(0);
        let strengths = corner_strength(&contour, default_k(contour.len())).unwrap();
        for n in 2..=6 {
            let corners =
                select_corners(&strengths, n, contour.len() as f64 / (2.0 * n as f64)).unwrap();
            let path = fit_path(&contour, &corners, &image, &mask).unwrap();
            assert_eq!(path.segments().len(), n);
            for i in 0..n {
                assert_eq!(path.segments()[i].p3, path.segments()[(i + 1) % n].p0);
            }
        }
    }

    #[test]
    fn recovers_control_points_of_sampled_cubics() {
        // A closed two-cubic lens, sampled densely; the fit should land
        // within half a pixel of the original control points. Chord-length
        // parameterization is only near-exact for gently curved segments,
        // so the handles stay close to the chord.
        let a = Point::new(0.0, 0.0);
        let b = Point::new(30.0, 0.0);
        let top = CubicSegment::new(a, Point::new(10.0, 3.0), Point::new(20.0, 3.0), b);
        let bottom = CubicSegment::new(b, Point::new(20.0, -3.0), Point::new(10.0, -3.0), a);
        let mut pts = Vec::new();
        for i in 0..60 {
            pts.push(top.eval(i as f64 / 60.0));
        }
        for i in 0..60 {
            pts.push(bottom.eval(i as f64 / 60.0));
        }
        let contour = Contour::new(pts).unwrap();
        let image = RasterImage::<f64>::filled(4, 4, [0.5; 3]);
        let mask = rect_mask(4, 4, 0, 0, 4, 4);
        let path = fit_path(&contour, &[0, 60], &image, &mask).unwrap();
        for (fitted, original) in path.segments().iter().zip([top, bottom]) {
            for (f, o) in [
                (fitted.p0, original.p0),
                (fitted.p1, original.p1),
                (fitted.p2, original.p2),
                (fitted.p3, original.p3),
            ] {
                assert!(f.distance(o) < 0.5, "{f:?} vs {o:?}");
            }
        }
    }

    fn max_contour_deviation(contour: &Contour<f64>, path: &BezierPath<f64>) -> f64 {
        let mut samples = Vec::new();
        for seg in path.segments() {
            for step in 0..64 {
                samples.push(seg.eval(step as f64 / 64.0));
            }
        }
        contour
            .points()
            .iter()
            .map(|p| {
                samples
                    .iter()
                    .map(|s| s.distance(*p))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

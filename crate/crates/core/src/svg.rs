//! Vector document model and SVG serialization.
//!
//! The emitted subset is SVG 1.1 with `svg` and `path` elements only; path
//! data is restricted to absolute `M`/`C`/`Z` commands and fills to the
//! `rgb(r,g,b)` form. [`read_svg`] parses exactly that subset back.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{Point, Rgb};
use crate::num::Real;

/// One cubic Bezier segment: endpoints `p0`/`p3`, handles `p1`/`p2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSegment<T = f64> {
    pub p0: Point<T>,
    pub p1: Point<T>,
    pub p2: Point<T>,
    pub p3: Point<T>,
}

impl<T: Real> CubicSegment<T> {
    pub fn new(p0: Point<T>, p1: Point<T>, p2: Point<T>, p3: Point<T>) -> Self {
        CubicSegment { p0, p1, p2, p3 }
    }

    /// Straight segment with handles at thirds of the chord.
    pub fn line(from: Point<T>, to: Point<T>) -> Self {
        let third = T::of(1.0 / 3.0);
        let delta = to - from;
        CubicSegment {
            p0: from,
            p1: from + delta.scale(third),
            p2: from + delta.scale(third + third),
            p3: to,
        }
    }

    /// Evaluates the curve at parameter `t`.
    pub fn eval(&self, t: T) -> Point<T> {
        let s = T::one() - t;
        let w0 = s * s * s;
        let w1 = T::of(3.0) * s * s * t;
        let w2 = T::of(3.0) * s * t * t;
        let w3 = t * t * t;
        self.p0.scale(w0) + self.p1.scale(w1) + self.p2.scale(w2) + self.p3.scale(w3)
    }
}

/// Closed chain of cubic segments with an opaque fill color.
///
/// Each segment's `p3` equals the next segment's `p0` (the last wraps to the
/// first), so a path with `n` segments has `3n` distinct control points.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierPath<T = f64> {
    segments: Vec<CubicSegment<T>>,
    pub fill: Rgb<T>,
}

impl<T: Real> BezierPath<T> {
    pub fn new(segments: Vec<CubicSegment<T>>, fill: Rgb<T>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("path needs at least one segment"));
        }
        for i in 0..segments.len() {
            let next = (i + 1) % segments.len();
            if segments[i].p3 != segments[next].p0 {
                return Err(Error::invalid(format!(
                    "path is not closed: segment {i} ends away from segment {next}"
                )));
            }
        }
        Ok(BezierPath { segments, fill })
    }

    pub fn segments(&self) -> &[CubicSegment<T>] {
        &self.segments
    }

    /// Number of distinct control points (`3 * segments`, anchors shared).
    pub fn distinct_point_count(&self) -> usize {
        3 * self.segments.len()
    }
}

/// Z-ordered list of paths over a pixel canvas; index 0 is backmost.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDocument<T = f64> {
    pub width: usize,
    pub height: usize,
    pub paths: Vec<BezierPath<T>>,
}

impl<T: Real> VectorDocument<T> {
    pub fn new(width: usize, height: usize) -> Self {
        VectorDocument {
            width,
            height,
            paths: Vec::new(),
        }
    }
}

/// Size summary of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DocumentStats {
    pub path_count: usize,
    /// Per path: 2 coordinates per distinct control point, plus 3 fill
    /// channels.
    pub parameter_count: usize,
    pub width: usize,
    pub height: usize,
}

/// Counts paths and free parameters.
pub fn stats<T: Real>(doc: &VectorDocument<T>) -> DocumentStats {
    let parameter_count = doc
        .paths
        .iter()
        .map(|p| 2 * p.distinct_point_count() + 3)
        .sum();
    DocumentStats {
        path_count: doc.paths.len(),
        parameter_count,
        width: doc.width,
        height: doc.height,
    }
}

fn fill_to_byte<T: Real>(c: T) -> u8 {
    (c.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Serializes a document to a string in the emitted SVG subset.
pub fn svg_string<T: Real>(doc: &VectorDocument<T>) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = write_svg_open(&mut out, doc.width, doc.height);
    for path in &doc.paths {
        let mut d = String::new();
        let start = path.segments()[0].p0;
        let _ = write!(d, "M {:.2},{:.2}", start.x.to_f64_lossy(), start.y.to_f64_lossy());
        for seg in path.segments() {
            let _ = write!(
                d,
                " C {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}",
                seg.p1.x.to_f64_lossy(),
                seg.p1.y.to_f64_lossy(),
                seg.p2.x.to_f64_lossy(),
                seg.p2.y.to_f64_lossy(),
                seg.p3.x.to_f64_lossy(),
                seg.p3.y.to_f64_lossy()
            );
        }
        d.push_str(" Z");
        let _ = writeln!(
            out,
            "  <path d=\"{}\" fill=\"rgb({},{},{})\"/>",
            d,
            fill_to_byte(path.fill[0]),
            fill_to_byte(path.fill[1]),
            fill_to_byte(path.fill[2])
        );
    }
    out.push_str("</svg>\n");
    out
}

fn write_svg_open(out: &mut String, width: usize, height: usize) -> std::fmt::Result {
    use std::fmt::Write;
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = width,
        h = height
    )
}

/// Writes the document as an SVG file.
pub fn write_svg<T: Real>(doc: &VectorDocument<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, svg_string(doc)).map_err(|e| Error::io(path, e))
}

/// Reads a document previously produced by [`write_svg`].
///
/// Only the emitted subset is accepted; anything else is rejected with the
/// offending location.
pub fn read_svg<T: Real>(path: impl AsRef<Path>) -> Result<VectorDocument<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_svg(&text)
}

/// Parses SVG text in the emitted subset.
pub fn parse_svg<T: Real>(text: &str) -> Result<VectorDocument<T>> {
    Parser { text, pos: 0 }.document()
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, pos: usize, msg: impl std::fmt::Display) -> Error {
        let consumed = &self.text[..pos.min(self.text.len())];
        let line = consumed.matches('\n').count() + 1;
        let col = pos - consumed.rfind('\n').map_or(0, |i| i + 1) + 1;
        Error::format(format!("svg: {msg} at line {line}, column {col}"))
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn document<T: Real>(&mut self) -> Result<VectorDocument<T>> {
        self.skip_ws();
        if self.text[self.pos..].starts_with("<?xml") {
            match self.text[self.pos..].find("?>") {
                Some(end) => self.pos += end + 2,
                None => return Err(self.err(self.pos, "unterminated xml declaration")),
            }
        }
        self.skip_ws();
        if !self.text[self.pos..].starts_with("<svg") {
            return Err(self.err(self.pos, "expected <svg> root element"));
        }
        let (attrs, _) = self.element("svg")?;
        let view_box = attrs
            .iter()
            .find(|(k, _)| k == "viewBox")
            .ok_or_else(|| self.err(self.pos, "missing viewBox"))?;
        let dims: Vec<&str> = view_box.1.split_whitespace().collect();
        if dims.len() != 4 || dims[0] != "0" || dims[1] != "0" {
            return Err(self.err(self.pos, format!("unsupported viewBox '{}'", view_box.1)));
        }
        let width: usize = dims[2]
            .parse()
            .map_err(|_| self.err(self.pos, "bad viewBox width"))?;
        let height: usize = dims[3]
            .parse()
            .map_err(|_| self.err(self.pos, "bad viewBox height"))?;

        let mut doc = VectorDocument::new(width, height);
        loop {
            self.skip_ws();
            if self.text[self.pos..].starts_with("</svg>") {
                self.pos += "</svg>".len();
                break;
            }
            if self.text[self.pos..].starts_with("<path") {
                let start = self.pos;
                let (attrs, self_closing) = self.element("path")?;
                if !self_closing {
                    return Err(self.err(start, "path element must be self-closing"));
                }
                doc.paths.push(self.parse_path(start, &attrs)?);
            } else if self.pos >= self.text.len() {
                return Err(self.err(self.pos, "unexpected end of file (missing </svg>)"));
            } else {
                return Err(self.err(self.pos, "unsupported construct"));
            }
        }
        self.skip_ws();
        if self.pos != self.text.len() {
            return Err(self.err(self.pos, "trailing content after </svg>"));
        }
        Ok(doc)
    }

    /// Parses `<name attr="v" ...>` or `<name ... />` starting at `self.pos`.
    fn element(&mut self, name: &str) -> Result<(Vec<(String, String)>, bool)> {
        let start = self.pos;
        self.pos += 1 + name.len();
        let mut attrs = Vec::new();
        loop {
            self.skip_ws();
            let rest = &self.text[self.pos..];
            if rest.starts_with("/>") {
                self.pos += 2;
                return Ok((attrs, true));
            }
            if rest.starts_with('>') {
                self.pos += 1;
                return Ok((attrs, false));
            }
            if rest.is_empty() {
                return Err(self.err(start, format!("unterminated <{name}> element")));
            }
            let eq = rest
                .find('=')
                .ok_or_else(|| self.err(self.pos, "expected attribute"))?;
            let key = rest[..eq].trim().to_string();
            let after = &rest[eq + 1..];
            if !after.starts_with('"') {
                return Err(self.err(self.pos + eq + 1, "expected quoted attribute value"));
            }
            let close = after[1..]
                .find('"')
                .ok_or_else(|| self.err(self.pos + eq + 1, "unterminated attribute value"))?;
            let value = after[1..1 + close].to_string();
            self.pos += eq + 1 + close + 2;
            attrs.push((key, value));
        }
    }

    fn parse_path<T: Real>(
        &self,
        at: usize,
        attrs: &[(String, String)],
    ) -> Result<BezierPath<T>> {
        let d = attrs
            .iter()
            .find(|(k, _)| k == "d")
            .ok_or_else(|| self.err(at, "path missing d attribute"))?;
        let fill = attrs
            .iter()
            .find(|(k, _)| k == "fill")
            .ok_or_else(|| self.err(at, "path missing fill attribute"))?;
        let fill = parse_fill(&fill.1).map_err(|m| self.err(at, m))?;
        let segments = parse_path_data(&d.1).map_err(|m| self.err(at, m))?;
        BezierPath::new(segments, fill)
    }
}

fn parse_fill<T: Real>(value: &str) -> std::result::Result<Rgb<T>, String> {
    let inner = value
        .strip_prefix("rgb(")
        .and_then(|v| v.strip_suffix(')'))
        .ok_or_else(|| format!("unsupported fill '{value}' (expected rgb(r,g,b))"))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("fill '{value}' needs three channels"));
    }
    let mut out = [T::zero(); 3];
    for (i, p) in parts.iter().enumerate() {
        let byte: u8 = p
            .parse()
            .map_err(|_| format!("bad fill channel '{p}'"))?;
        out[i] = T::of(byte as f64 / 255.0);
    }
    Ok(out)
}

fn parse_path_data<T: Real>(d: &str) -> std::result::Result<Vec<CubicSegment<T>>, String> {
    let mut tokens = PathTokens { d, pos: 0 };
    let cmd = tokens.command()?;
    if cmd != 'M' {
        return Err(format!("path data must start with M, found '{cmd}'"));
    }
    let start: Point<T> = tokens.point()?;
    let mut segments = Vec::new();
    let mut cursor = start;
    loop {
        let cmd = tokens.command()?;
        match cmd {
            'C' => {
                let p1 = tokens.point()?;
                let p2 = tokens.point()?;
                let p3 = tokens.point()?;
                segments.push(CubicSegment::new(cursor, p1, p2, p3));
                cursor = p3;
            }
            'Z' => break,
            other => {
                return Err(format!(
                    "unsupported path command '{other}' at offset {}",
                    tokens.pos
                ))
            }
        }
    }
    tokens.skip_ws();
    if tokens.pos != d.len() {
        return Err(format!("trailing path data at offset {}", tokens.pos));
    }
    if segments.is_empty() {
        return Err("path has no curve segments".to_string());
    }
    if cursor != start {
        return Err("path does not return to its start point".to_string());
    }
    Ok(segments)
}

struct PathTokens<'a> {
    d: &'a str,
    pos: usize,
}

impl<'a> PathTokens<'a> {
    fn skip_ws(&mut self) {
        let bytes = self.d.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos] == b' ' || bytes[self.pos] == b',') {
            self.pos += 1;
        }
    }

    fn command(&mut self) -> std::result::Result<char, String> {
        self.skip_ws();
        let c = self.d[self.pos..]
            .chars()
            .next()
            .ok_or("unexpected end of path data")?;
        self.pos += c.len_utf8();
        Ok(c)
    }

    fn number<T: Real>(&mut self) -> std::result::Result<T, String> {
        self.skip_ws();
        let bytes = self.d.as_bytes();
        let start = self.pos;
        if self.pos < bytes.len() && (bytes[self.pos] == b'-' || bytes[self.pos] == b'+') {
            self.pos += 1;
        }
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected number at offset {start}"));
        }
        self.d[start..self.pos]
            .parse::<f64>()
            .map(T::of)
            .map_err(|_| format!("bad number '{}'", &self.d[start..self.pos]))
    }

    fn point<T: Real>(&mut self) -> std::result::Result<Point<T>, String> {
        let x = self.number()?;
        let y = self.number()?;
        Ok(Point::new(x, y))
    }
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
    fn empty_document_serializes_and_parses() {
        let doc = VectorDocument::<f64>::new(10, 20);
        let text = svg_string(&doc);
        assert!(text.contains("viewBox=\"0 0 10 20\""));
        assert!(!text.contains("<path"));
        let back: VectorDocument<f64> = parse_svg(&text).unwrap();
        assert_eq!(back.width, 10);
        assert_eq!(back.height, 20);
        assert!(back.paths.is_empty());
    }

    #[test]
    fn four_segment_path_structure() {
        let mut doc = VectorDocument::<f64>::new(32, 32);
        doc.paths.push(square_path(4.0, 4.0, 10.0, [1.0, 0.0, 0.0]));
        let text = svg_string(&doc);
        let d_attr = text
            .split("d=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        assert_eq!(d_attr.matches('M').count(), 1);
        assert_eq!(d_attr.matches('C').count(), 4);
        assert_eq!(d_attr.matches('Z').count(), 1);
        assert!(text.contains("fill=\"rgb(255,0,0)\""));
    }

    #[test]
    fn arc_command_is_rejected_with_location() {
        let text = "<svg xmlns=\"x\" viewBox=\"0 0 4 4\">\n<path d=\"M 0,0 A 1,1 0 0 0 2,2 Z\" fill=\"rgb(0,0,0)\"/>\n</svg>\n";
        let err = parse_svg::<f64>(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('A'), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unsupported_element_is_rejected() {
        let text = "<svg xmlns=\"x\" viewBox=\"0 0 4 4\"><rect/></svg>";
        assert!(parse_svg::<f64>(text).is_err());
    }

    #[test]
    fn round_trip_within_quantization() {
        let mut doc = VectorDocument::<f64>::new(64, 48);
        doc.paths.push(square_path(3.1234, 7.9876, 21.555, [
            128.0 / 255.0,
            7.0 / 255.0,
            255.0 / 255.0,
        ]));
        let text = svg_string(&doc);
        let back: VectorDocument<f64> = parse_svg(&text).unwrap();
        assert_eq!(back.paths.len(), 1);
        for (a, b) in doc.paths[0]
            .segments()
            .iter()
            .zip(back.paths[0].segments())
        {
            for (pa, pb) in [(a.p0, b.p0), (a.p1, b.p1), (a.p2, b.p2), (a.p3, b.p3)] {
                assert!((pa.x - pb.x).abs() < 0.005);
                assert!((pa.y - pb.y).abs() < 0.005);
            }
        }
        assert_eq!(doc.paths[0].fill, back.paths[0].fill);
    }

    #[test]
    fn negative_coordinates_round_trip() {
        let mut doc = VectorDocument::<f64>::new(8, 8);
        doc.paths.push(square_path(-5.25, -3.75, 4.0, [0.0, 0.0, 0.0]));
        let back: VectorDocument<f64> = parse_svg(&svg_string(&doc)).unwrap();
        let p = back.paths[0].segments()[0].p0;
        assert!((p.x + 5.25).abs() < 0.005);
        assert!((p.y + 3.75).abs() < 0.005);
    }

    #[test]
    fn stats_counting() {
        let mut doc = VectorDocument::<f64>::new(16, 16);
        assert_eq!(stats(&doc).path_count, 0);
        assert_eq!(stats(&doc).parameter_count, 0);

        doc.paths.push(square_path(0.0, 0.0, 8.0, [0.5; 3]));
        let s = stats(&doc);
        assert_eq!(s.path_count, 1);
        // 12 distinct control points -> 24 coordinates + 3 fill channels.
        assert_eq!(s.parameter_count, 27);

        doc.paths.push(square_path(0.0, 0.0, 8.0, [0.5; 3]));
        let s2 = stats(&doc);
        assert_eq!(s2.path_count, 2);
        assert_eq!(s2.parameter_count, 54);
    }

    #[test]
    fn stats_additive_over_concatenation() {
        let mut a = VectorDocument::<f64>::new(16, 16);
        a.paths.push(square_path(0.0, 0.0, 4.0, [0.1; 3]));
        let mut b = VectorDocument::<f64>::new(16, 16);
        b.paths.push(square_path(4.0, 4.0, 6.0, [0.9; 3]));
        b.paths.push(square_path(1.0, 1.0, 2.0, [0.4; 3]));
        let mut both = a.clone();
        both.paths.extend(b.paths.iter().cloned());
        assert_eq!(
            stats(&both).parameter_count,
            stats(&a).parameter_count + stats(&b).parameter_count
        );
        assert_eq!(
            stats(&both).path_count,
            stats(&a).path_count + stats(&b).path_count
        );
    }

    #[test]
    fn open_path_is_rejected() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(4.0, 0.0);
        let c = Point::new(4.0, 4.0);
        let segs = vec![CubicSegment::line(a, b), CubicSegment::line(b, c)];
        assert!(BezierPath::new(segs, [0.0; 3]).is_err());
    }
}

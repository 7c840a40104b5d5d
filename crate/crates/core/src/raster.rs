//! Raster-image plumbing shared by every stage: pixel grids, PNM/PNG IO,
//! binary-kernel convolution, difference maps and connected components.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Rgb;
use crate::num::Real;

/// Dense RGB pixel grid with channels in `[0, 1]`.
///
/// Pixels are stored row-major; `(x, y)` indexes column `x` of row `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage<T = f64> {
    width: usize,
    height: usize,
    data: Vec<Rgb<T>>,
}

impl<T: Real> RasterImage<T> {
    /// Builds an image from row-major RGB data, validating the invariants:
    /// `data.len() == width * height` and every channel in `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<Rgb<T>>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be nonzero"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel count {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        for (i, px) in data.iter().enumerate() {
            for c in px {
                if !(*c >= T::zero() && *c <= T::one()) {
                    return Err(Error::invalid(format!(
                        "channel out of [0,1] at pixel {i}"
                    )));
                }
            }
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    /// Constructs an image whose pixels come from `f(x, y)`; the closure must
    /// return channels in `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb<T>) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        RasterImage {
            width,
            height,
            data,
        }
    }

    /// Uniform fill.
    pub fn filled(width: usize, height: usize, color: Rgb<T>) -> Self {
        RasterImage {
            width,
            height,
            data: vec![color; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb<T> {
        self.data[y * self.width + x]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut Rgb<T> {
        &mut self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[Rgb<T>] {
        &self.data
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel real-valued grid (difference maps, coverage alpha, convolution
/// outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap<T = f64> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> ScalarMap<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "map length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(ScalarMap {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        ScalarMap {
            width,
            height,
            data: vec![T::zero(); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    /// True when every value is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.data
            .iter()
            .all(|v| *v == T::zero() || *v == T::one())
    }
}

/// Disc-shaped boolean convolution kernel on a `(2*floor(r)+1)^2` grid.
///
/// A cell is true iff its Euclidean distance to the grid center is at most
/// the radius; the center cell is always true.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryKernel {
    pub radius: f64,
    pub side: usize,
    pub cells: Vec<bool>,
}

impl BinaryKernel {
    pub fn cell(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.side + i]
    }

    /// Number of true cells.
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Offsets `(dx, dy)` of the true cells relative to the center.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let half = (self.side / 2) as isize;
        let mut out = Vec::with_capacity(self.count());
        for j in 0..self.side {
            for i in 0..self.side {
                if self.cell(i, j) {
                    out.push((i as isize - half, j as isize - half));
                }
            }
        }
        out
    }
}

/// Builds the disc kernel of radius `r` (`r >= 1`).
pub fn make_circular_kernel(r: f64) -> Result<BinaryKernel> {
    if !(r >= 1.0) {
        return Err(Error::invalid(format!("kernel radius {r} must be >= 1")));
    }
    let half = r.floor() as usize;
    let side = 2 * half + 1;
    let mut cells = vec![false; side * side];
    for j in 0..side {
        for i in 0..side {
            let dx = i as f64 - half as f64;
            let dy = j as f64 - half as f64;
            if (dx * dx + dy * dy).sqrt() <= r {
                cells[j * side + i] = true;
            }
        }
    }
    Ok(BinaryKernel {
        radius: r,
        side,
        cells,
    })
}

/// Correlates `map` with the true cells of `kernel`; out-of-bounds samples
/// contribute zero.
pub fn convolve_binary<T: Real>(map: &ScalarMap<T>, kernel: &BinaryKernel) -> ScalarMap<T> {
    let (w, h) = (map.width(), map.height());
    let offsets = kernel.offsets();
    let mut out = ScalarMap::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut sum = T::zero();
            for &(dx, dy) in &offsets {
                let sx = x as isize + dx;
                let sy = y as isize + dy;
                if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    sum = sum + map.get(sx as usize, sy as usize);
                }
            }
            out.set(x, y, sum);
        }
    }
    out
}

/// Per-pixel sum over channels of the absolute target/render difference;
/// values lie in `[0, 3]`.
pub fn difference_map<T: Real>(
    target: &RasterImage<T>,
    render: &RasterImage<T>,
) -> Result<ScalarMap<T>> {
    if !target.same_dims(render) {
        return Err(Error::dimension(format!(
            "difference_map: {}x{} vs {}x{}",
            target.width(),
            target.height(),
            render.width(),
            render.height()
        )));
    }
    let data = target
        .pixels()
        .iter()
        .zip(render.pixels())
        .map(|(a, b)| {
            (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
        })
        .collect();
    ScalarMap::new(target.width(), target.height(), data)
}

/// One 4-connected component of value-1 pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Member pixels, sorted row-major.
    pub pixels: Vec<(usize, usize)>,
    /// Mean of the member coordinates, rounded to the nearest pixel.
    pub centroid: (usize, usize),
}

/// Labels the 4-connected components of a strictly binary map, in row-major
/// discovery order.
pub fn connected_components<T: Real>(binary: &ScalarMap<T>) -> Result<Vec<Component>> {
    if !binary.is_binary() {
        return Err(Error::invalid(
            "connected_components requires a map of exact 0/1 values",
        ));
    }
    let (w, h) = (binary.width(), binary.height());
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    for start_y in 0..h {
        for start_x in 0..w {
            let idx = start_y * w + start_x;
            if seen[idx] || binary.get(start_x, start_y) != T::one() {
                continue;
            }
            let mut pixels = Vec::new();
            let mut queue = std::collections::VecDeque::new();
            seen[idx] = true;
            queue.push_back((start_x, start_y));
            while let Some((x, y)) = queue.pop_front() {
                pixels.push((x, y));
                for (nx, ny) in neighbors4(x, y, w, h) {
                    let nidx = ny * w + nx;
                    if !seen[nidx] && binary.get(nx, ny) == T::one() {
                        seen[nidx] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            pixels.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
            let n = pixels.len() as f64;
            let sx: usize = pixels.iter().map(|p| p.0).sum();
            let sy: usize = pixels.iter().map(|p| p.1).sum();
            let centroid = (
                (sx as f64 / n).round() as usize,
                (sy as f64 / n).round() as usize,
            );
            components.push(Component { pixels, centroid });
        }
    }
    Ok(components)
}

/// 4-neighborhood of `(x, y)` clipped to the grid, in row-major order.
pub(crate) fn neighbors4(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let candidates = [
        (x as isize, y as isize - 1),
        (x as isize - 1, y as isize),
        (x as isize + 1, y as isize),
        (x as isize, y as isize + 1),
    ];
    candidates.into_iter().filter_map(move |(nx, ny)| {
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h)
            .then_some((nx as usize, ny as usize))
    })
}

// ---------------------------------------------------------------------------
// Image IO
// ---------------------------------------------------------------------------

const PNG_MAGIC: [u8; 4] = [0x89, b'P', b'N', b'G'];

/// Loads an RGB image (binary PPM `P6` with maxval 255, or PNG), normalizing
/// channels to `[0, 1]` as `c / 255`.
pub fn load_image<T: Real>(path: impl AsRef<Path>) -> Result<RasterImage<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        decode_ppm(&bytes)
    } else if bytes.starts_with(&PNG_MAGIC) {
        decode_png_rgb(&bytes)
    } else {
        Err(Error::format(format!(
            "{}: unsupported image format (expected P6 PPM or PNG)",
            path.display()
        )))
    }
}

/// Writes a binary PPM (`P6`, maxval 255); channels are scaled by 255 and
/// rounded half away from zero.
pub fn write_ppm<T: Real>(image: &RasterImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.reserve(image.pixels().len() * 3);
    for px in image.pixels() {
        for c in px {
            bytes.push(channel_to_byte(*c));
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a scalar map as a binary PGM (`P5`), mapping `[0, 1]` to 0..=255.
pub fn write_pgm<T: Real>(map: &ScalarMap<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    bytes.reserve(map.values().len());
    for v in map.values() {
        let clamped = v.max(T::zero()).min(T::one());
        bytes.push(channel_to_byte(clamped));
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads an 8-bit grayscale image (`P5` PGM or PNG) as raw bytes.
pub(crate) fn load_gray_bytes(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(&PNG_MAGIC) {
        let img = image::load_from_memory(&bytes)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(Error::format(format!("{}: zero-dimension image", path.display())));
        }
        Ok((w, h, img.into_raw()))
    } else {
        Err(Error::format(format!(
            "{}: unsupported mask format (expected P5 PGM or PNG)",
            path.display()
        )))
    }
}

fn channel_to_byte<T: Real>(c: T) -> u8 {
    let scaled = (c.to_f64_lossy() * 255.0).round();
    scaled.clamp(0.0, 255.0) as u8
}

fn decode_ppm<T: Real>(bytes: &[u8]) -> Result<RasterImage<T>> {
    let (w, h, data) = decode_pnm(bytes, b"P6", 3)?;
    let pixels = data
        .chunks_exact(3)
        .map(|c| {
            [
                T::of(c[0] as f64 / 255.0),
                T::of(c[1] as f64 / 255.0),
                T::of(c[2] as f64 / 255.0),
            ]
        })
        .collect();
    RasterImage::new(w, h, pixels)
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    decode_pnm(bytes, b"P5", 1)
}

/// Shared PNM header/body parser for P5 (1 byte/px) and P6 (3 bytes/px).
fn decode_pnm(bytes: &[u8], magic: &[u8], bytes_per_px: usize) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = magic.len();
    if !bytes.starts_with(magic) {
        return Err(Error::format("bad PNM magic"));
    }
    let mut fields = [0usize; 3];
    for field in &mut fields {
        *field = read_pnm_int(bytes, &mut pos)?;
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if w == 0 || h == 0 {
        return Err(Error::format("zero-dimension image"));
    }
    if maxval != 255 {
        return Err(Error::format(format!(
            "unsupported PNM maxval {maxval} (only 255)"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format("missing whitespace after PNM header"));
    }
    pos += 1;
    let expected = w * h * bytes_per_px;
    let body = &bytes[pos..];
    if body.len() < expected {
        return Err(Error::format(format!(
            "truncated PNM body: expected {expected} bytes, found {}",
            body.len()
        )));
    }
    Ok((w, h, body[..expected].to_vec()))
}

/// Reads the next decimal integer in a PNM header, skipping whitespace and
/// `#` comment lines.
fn read_pnm_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("expected integer in PNM header"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("malformed integer in PNM header"))
}

fn decode_png_rgb<T: Real>(bytes: &[u8]) -> Result<RasterImage<T>> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| Error::format(format!("png decode: {e}")))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::format("zero-dimension image"));
    }
    let pixels = img
        .pixels()
        .map(|p| {
            [
                T::of(p.0[0] as f64 / 255.0),
                T::of(p.0[1] as f64 / 255.0),
                T::of(p.0[2] as f64 / 255.0),
            ]
        })
        .collect();
    RasterImage::new(w, h, pixels)
}

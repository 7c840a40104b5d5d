//! Masks and segmentation providers.
//!
//! Two providers are available: ingestion of externally produced mask files
//! (via a JSON manifest) and a built-in promptable region-growing segmenter
//! usable in grid ("automatic") or point-prompt mode.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::raster::{self, RasterImage};

/// Default RGB tolerance for the built-in region grower (channels in [0,1]).
pub const DEFAULT_TOLERANCE: f64 = 0.12;

/// IoU above which two automatic masks are considered duplicates.
pub const IOU_DEDUP_THRESHOLD: f64 = 0.9;

/// Default minimum component/hole area for [`clean_mask`]: 0.05% of the
/// image, at least 1.
pub fn default_min_area(width: usize, height: usize) -> usize {
    ((0.0005 * (width * height) as f64).ceil() as usize).max(1)
}

/// Binary pixel set produced by segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    area: usize,
    confidence: f64,
}

impl Mask {
    /// Builds a mask; the area is recomputed from the bits.
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "mask bit count {} does not match {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        let area = bits.iter().filter(|b| **b).count();
        Ok(Mask {
            width,
            height,
            bits,
            area,
            confidence: 1.0,
        })
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Coordinates of the first true pixel in row-major order, used as a
    /// deterministic tie-breaker when sorting masks by area.
    pub fn first_true_pixel(&self) -> Option<(usize, usize)> {
        self.bits
            .iter()
            .position(|b| *b)
            .map(|i| (i % self.width, i / self.width))
    }

    /// Packs the bits into 64-bit words for fast intersection counting.
    fn packed(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.bits.len().div_ceil(64)];
        for (i, b) in self.bits.iter().enumerate() {
            if *b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        words
    }
}

/// Pixel coordinate used to prompt the segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub struct PromptPoint {
    pub x: usize,
    pub y: usize,
}

impl PromptPoint {
    pub fn new(x: usize, y: usize) -> Self {
        PromptPoint { x, y }
    }
}

#[derive(Deserialize)]
struct Manifest {
    width: usize,
    height: usize,
    masks: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct ManifestEntry {
    file: String,
    #[serde(default = "default_confidence")]
    confidence: f64,
}

fn default_confidence() -> f64 {
    1.0
}

/// Loads masks listed in a JSON manifest, in manifest order.
///
/// The manifest carries `width`, `height` and an ordered `masks` list of
/// `{file, confidence}` entries; mask files are 8-bit grayscale (P5 PGM or
/// PNG) thresholded at 127, with paths resolved relative to the manifest.
pub fn ingest_masks<T: Real>(
    manifest_path: impl AsRef<Path>,
    image: &RasterImage<T>,
) -> Result<Vec<Mask>> {
    let manifest_path = manifest_path.as_ref();
    let text =
        std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.width != image.width() || manifest.height != image.height() {
        return Err(Error::dimension(format!(
            "manifest declares {}x{} but image is {}x{}",
            manifest.width,
            manifest.height,
            image.width(),
            image.height()
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut masks = Vec::with_capacity(manifest.masks.len());
    for (index, entry) in manifest.masks.iter().enumerate() {
        let file = base.join(&entry.file);
        let (w, h, gray) = raster::load_gray_bytes(&file)?;
        if w != image.width() || h != image.height() {
            return Err(Error::dimension(format!(
                "mask entry {index} ({}) is {w}x{h}, image is {}x{}",
                entry.file,
                image.width(),
                image.height()
            )));
        }
        let bits = gray.iter().map(|v| *v > 127).collect();
        masks.push(Mask::new(w, h, bits)?.with_confidence(entry.confidence));
    }
    Ok(masks)
}

/// Grows a region from `seed` by 4-connected flood fill, admitting pixels
/// whose Euclidean RGB distance to the running region mean is at most
/// `tolerance`.
///
/// Candidates are processed breadth-first with row-major tie-breaking; each
/// pixel is considered once, against the mean at the moment it is reached.
pub fn prompt_segment<T: Real>(
    image: &RasterImage<T>,
    seed: PromptPoint,
    tolerance: T,
) -> Result<Mask> {
    let (w, h) = (image.width(), image.height());
    if seed.x >= w || seed.y >= h {
        return Err(Error::invalid(format!(
            "seed ({}, {}) outside {w}x{h} image",
            seed.x, seed.y
        )));
    }
    if !(tolerance > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut bits = vec![false; w * h];
    let mut queued = vec![false; w * h];
    let mut queue = std::collections::VecDeque::new();
    let mut sum = [T::zero(); 3];
    let mut count = T::zero();

    queued[seed.y * w + seed.x] = true;
    queue.push_back((seed.x, seed.y, true));
    while let Some((x, y, is_seed)) = queue.pop_front() {
        let px = image.pixel(x, y);
        if !is_seed {
            let mut dist2 = T::zero();
            for c in 0..3 {
                let d = px[c] - sum[c] / count;
                dist2 = dist2 + d * d;
            }
            if dist2.sqrt() > tolerance {
                continue;
            }
        }
        bits[y * w + x] = true;
        for c in 0..3 {
            sum[c] = sum[c] + px[c];
        }
        count = count + T::one();
        for (nx, ny) in raster::neighbors4(x, y, w, h) {
            if !queued[ny * w + nx] {
                queued[ny * w + nx] = true;
                queue.push_back((nx, ny, false));
            }
        }
    }
    Mask::new(w, h, bits)
}

/// Runs [`prompt_segment`] on a `grid_side`-by-`grid_side` grid of evenly
/// spaced interior seeds and deduplicates near-identical results.
///
/// Candidates are considered largest-first; a mask is dropped when its IoU
/// with an already accepted mask exceeds 0.9, so the larger of any duplicate
/// pair survives and accepted masks are pairwise IoU <= 0.9.
pub fn auto_segment<T: Real>(image: &RasterImage<T>, grid_side: usize) -> Result<Vec<Mask>> {
    auto_segment_with_tolerance(image, grid_side, T::of(DEFAULT_TOLERANCE))
}

/// [`auto_segment`] with an explicit region-growing tolerance.
pub fn auto_segment_with_tolerance<T: Real>(
    image: &RasterImage<T>,
    grid_side: usize,
    tolerance: T,
) -> Result<Vec<Mask>> {
    if grid_side < 1 {
        return Err(Error::invalid("grid_side must be >= 1"));
    }
    let (w, h) = (image.width(), image.height());
    let mut candidates = Vec::with_capacity(grid_side * grid_side);
    for j in 0..grid_side {
        for i in 0..grid_side {
            let x = ((i as f64 + 0.5) * w as f64 / grid_side as f64) as usize;
            let y = ((j as f64 + 0.5) * h as f64 / grid_side as f64) as usize;
            let mask = prompt_segment(image, PromptPoint::new(x.min(w - 1), y.min(h - 1)), tolerance)?;
            if mask.area() > 0 {
                candidates.push(mask);
            }
        }
    }
    // Largest first; grid order breaks ties.
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|a, b| {
        candidates[*b]
            .area()
            .cmp(&candidates[*a].area())
            .then(a.cmp(b))
    });

    let mut accepted: Vec<Mask> = Vec::new();
    let mut accepted_words: Vec<(usize, Vec<u64>)> = Vec::new();
    for idx in order {
        let mask = &candidates[idx];
        let words = mask.packed();
        let duplicate = accepted_words.iter().any(|(area, aw)| {
            let inter: u64 = aw
                .iter()
                .zip(&words)
                .map(|(a, b)| (a & b).count_ones() as u64)
                .sum();
            let union = (*area + mask.area()) as u64 - inter;
            union > 0 && inter as f64 / union as f64 > IOU_DEDUP_THRESHOLD
        });
        if !duplicate {
            accepted_words.push((mask.area(), words));
            accepted.push(mask.clone());
        }
    }
    Ok(accepted)
}

/// Removes true components smaller than `min_area` and fills false holes
/// (false components not touching the image border) smaller than `min_area`.
pub fn clean_mask(mask: &Mask, min_area: usize) -> Result<Mask> {
    if min_area < 1 {
        return Err(Error::invalid("min_area must be >= 1"));
    }
    let (w, h) = (mask.width(), mask.height());
    let mut bits = mask.bits().to_vec();

    // Pass 1: drop small true components.
    for comp in bool_components(&bits, w, h, true) {
        if comp.len() < min_area {
            for &(x, y) in &comp {
                bits[y * w + x] = false;
            }
        }
    }

    // Pass 2: fill small false holes that do not touch the border.
    for comp in bool_components(&bits, w, h, false) {
        let touches_border = comp
            .iter()
            .any(|&(x, y)| x == 0 || y == 0 || x == w - 1 || y == h - 1);
        if !touches_border && comp.len() < min_area {
            for &(x, y) in &comp {
                bits[y * w + x] = true;
            }
        }
    }
    Mask::new(w, h, bits)
}

/// 4-connected components of pixels equal to `value`, in row-major
/// discovery order.
fn bool_components(bits: &[bool], w: usize, h: usize, value: bool) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            let sidx = sy * w + sx;
            if seen[sidx] || bits[sidx] != value {
                continue;
            }
            seen[sidx] = true;
            let mut comp = Vec::new();
            let mut queue = std::collections::VecDeque::from([(sx, sy)]);
            while let Some((x, y)) = queue.pop_front() {
                comp.push((x, y));
                for (nx, ny) in raster::neighbors4(x, y, w, h) {
                    let nidx = ny * w + nx;
                    if !seen[nidx] && bits[nidx] == value {
                        seen[nidx] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

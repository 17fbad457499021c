//! Per-image filters: pixel-count gate, Sobel flatness, luma entropy.
//!
//! All image statistics run on 8-bit luma. Color images are converted with
//! BT.601 weights, `Y = round(0.299 R + 0.587 G + 0.114 B)`; grayscale inputs
//! are used as-is (16-bit gray keeps its high byte).

use std::path::Path;

use image::DynamicImage;
use serde::Serialize;

use super::{CurationConfig, CurationError, ImageMetaRecord, Result};

/// Row-major 8-bit luma plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl LumaImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size");
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let pixels = match img {
            DynamicImage::ImageLuma8(g) => g.as_raw().clone(),
            DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0]).collect(),
            DynamicImage::ImageLuma16(g) => g.pixels().map(|p| (p.0[0] >> 8) as u8).collect(),
            DynamicImage::ImageLumaA16(g) => g.pixels().map(|p| (p.0[0] >> 8) as u8).collect(),
            other => other
                .to_rgb8()
                .pixels()
                .map(|p| bt601(p.0[0], p.0[1], p.0[2]))
                .collect(),
        };
        Self::new(width, height, pixels)
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> i32 {
        i32::from(self.pixels[y * self.width + x])
    }
}

#[inline]
fn bt601(r: u8, g: u8, b: u8) -> u8 {
    let y = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
    ((y + 500) / 1000) as u8
}

pub fn load_luma(path: &Path) -> Result<LumaImage> {
    let img = image::ImageReader::open(path)
        .map_err(|source| CurationError::Io {
            path: path.display().to_string(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| CurationError::Io {
            path: path.display().to_string(),
            source,
        })?
        .decode()
        .map_err(|e| CurationError::Decode {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    Ok(LumaImage::from_dynamic(&img))
}

/// Passes iff `width·height >= min_pixels`. Orientation does not matter.
pub fn resolution_gate(record: &ImageMetaRecord, min_pixels: u64) -> Result<bool> {
    let (w, h) = record
        .dims()
        .ok_or_else(|| CurationError::MissingDims(record.id.clone()))?;
    Ok(u64::from(w) * u64::from(h) >= min_pixels)
}

/// 3×3 Sobel gradient magnitude over a `size × size` tile whose top-left
/// corner is `(x0, y0)`. Samples outside the tile replicate its edge, so each
/// tile is scored from its own pixels only.
pub fn sobel_magnitudes(img: &LumaImage, x0: usize, y0: usize, size: usize, out: &mut Vec<f64>) {
    out.clear();
    let last = size - 1;
    for ty in 0..size {
        let rows = [
            y0 + ty.saturating_sub(1),
            y0 + ty,
            y0 + (ty + 1).min(last),
        ];
        for tx in 0..size {
            let cols = [
                x0 + tx.saturating_sub(1),
                x0 + tx,
                x0 + (tx + 1).min(last),
            ];
            let p = |r: usize, c: usize| img.at(cols[c], rows[r]);
            let gx = (p(0, 2) + 2 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2 * p(1, 0) + p(2, 0));
            let gy = (p(2, 0) + 2 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2 * p(0, 1) + p(0, 2));
            out.push(f64::from(gx).hypot(f64::from(gy)));
        }
    }
}

/// Population variance of the Sobel magnitude for every full tile, row by row.
/// Right and bottom remainders narrower than a tile are not scored.
pub fn patch_flatness_scores(img: &LumaImage, patch: usize) -> Vec<f64> {
    let (cols, rows) = (img.width / patch, img.height / patch);
    let mut scores = Vec::with_capacity(cols * rows);
    let mut buf = Vec::with_capacity(patch * patch);
    for py in 0..rows {
        for px in 0..cols {
            sobel_magnitudes(img, px * patch, py * patch, patch, &mut buf);
            let n = buf.len() as f64;
            let mean = buf.iter().sum::<f64>() / n;
            let var = buf.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
            scores.push(var);
        }
    }
    scores
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessResult {
    pub patches: usize,
    pub flagged: usize,
    /// `flagged / patches`; 0 when no full patch fits.
    pub ratio: f64,
    pub mean_score: f64,
    pub passed: bool,
}

pub fn flatness_filter(img: &LumaImage, cfg: &CurationConfig) -> FlatnessResult {
    let scores = patch_flatness_scores(img, cfg.flatness_patch as usize);
    let patches = scores.len();
    let flagged = scores.iter().filter(|&&s| s < cfg.flatness_threshold).count();
    let (ratio, mean_score) = if patches == 0 {
        (0.0, 0.0)
    } else {
        (
            flagged as f64 / patches as f64,
            scores.iter().sum::<f64>() / patches as f64,
        )
    };
    FlatnessResult {
        patches,
        flagged,
        ratio,
        mean_score,
        passed: ratio <= cfg.flatness_max_ratio,
    }
}

/// Shannon entropy in bits of the 256-bin luma histogram.
pub fn entropy_bits(img: &LumaImage) -> f64 {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let total = img.pixels.len() as f64;
    if total == 0.0 {
        return 0.0;
    }
    -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

/// `(H, passed)`; fails iff `H < min_bits`.
pub fn entropy_filter(img: &LumaImage, min_bits: f64) -> (f64, bool) {
    let h = entropy_bits(img);
    (h, h >= min_bits)
}

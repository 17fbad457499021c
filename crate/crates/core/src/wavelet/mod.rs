//! One-level orthonormal 2D Haar transform over `C × H × W` latents.
//!
//! Each channel is transformed independently. For the 2×2 block
//!
//! ```text
//! a b
//! c d
//! ```
//!
//! the orthonormal analysis is
//!
//! ```text
//! LL = (a + b + c + d) / 2
//! LH = (a + b - c - d) / 2   horizontal detail (row difference)
//! HL = (a - b + c - d) / 2   vertical detail (column difference)
//! HH = (a - b - c + d) / 2   diagonal detail
//! ```
//!
//! The stacked view concatenates the subbands along channels in the fixed
//! order `[LL, LH, HL, HH]`, each block holding `C` channels.

mod format;
mod stats;

pub use format::{read_latent, write_latent, LatentDtype, LATENT_MAGIC};
pub use stats::{
    subband_stats, subband_stats_many, BandStats, Histogram, SubbandStats, TailFraction,
    DEFAULT_TAIL_THRESHOLDS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WaveletError {
    #[error("tensor dimensions must be positive, got {channels}x{height}x{width}")]
    EmptyShape {
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("data length {actual} does not match shape {channels}x{height}x{width}")]
    DataLength {
        channels: usize,
        height: usize,
        width: usize,
        actual: usize,
    },
    #[error("spatial dimensions must be even for a one-level transform, got {height}x{width}")]
    OddDimension { height: usize, width: usize },
    #[error("subband shapes are inconsistent")]
    SubbandShape,
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("bad latent file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WaveletError>;

/// Dense `channels × height × width` tensor in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl LatentTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(WaveletError::EmptyShape {
                channels,
                height,
                width,
            });
        }
        if data.len() != channels * height * width {
            return Err(WaveletError::DataLength {
                channels,
                height,
                width,
                actual: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0.0; channels * height * width])
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for h in 0..height {
                for w in 0..width {
                    data.push(f(c, h, w));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn ensure_same_shape(&self, other: &LatentTensor) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(WaveletError::ShapeMismatch(self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Elementwise `a·self + b·other`.
    pub fn affine(&self, a: f64, other: &LatentTensor, b: f64) -> Result<LatentTensor> {
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(self.with_data(data))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> LatentTensor {
        self.with_data(self.data.iter().map(|&x| f(x)).collect())
    }

    fn with_data(&self, data: Vec<f64>) -> LatentTensor {
        debug_assert_eq!(data.len(), self.data.len());
        LatentTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Subband order used by the stacked view and in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subband {
    LL,
    LH,
    HL,
    HH,
}

impl Subband {
    pub const ALL: [Subband; 4] = [Subband::LL, Subband::LH, Subband::HL, Subband::HH];

    pub fn name(self) -> &'static str {
        match self {
            Subband::LL => "LL",
            Subband::LH => "LH",
            Subband::HL => "HL",
            Subband::HH => "HH",
        }
    }
}

/// Four `C × H/2 × W/2` subbands of a one-level transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandTensor {
    channels: usize,
    height: usize,
    width: usize,
    bands: [Vec<f64>; 4],
}

impl SubbandTensor {
    /// `height`/`width` are the subband extents (half the source extents).
    pub fn new(channels: usize, height: usize, width: usize, bands: [Vec<f64>; 4]) -> Result<Self> {
        let n = channels * height * width;
        if n == 0 || bands.iter().any(|b| b.len() != n) {
            return Err(WaveletError::SubbandShape);
        }
        Ok(Self {
            channels,
            height,
            width,
            bands,
        })
    }

    /// Splits a `4C`-channel stacked tensor back into subbands.
    pub fn from_stacked(stacked: &LatentTensor) -> Result<Self> {
        if stacked.channels % 4 != 0 {
            return Err(WaveletError::SubbandShape);
        }
        let channels = stacked.channels / 4;
        let block = channels * stacked.height * stacked.width;
        let d = &stacked.data;
        Self::new(
            channels,
            stacked.height,
            stacked.width,
            [
                d[..block].to_vec(),
                d[block..2 * block].to_vec(),
                d[2 * block..3 * block].to_vec(),
                d[3 * block..].to_vec(),
            ],
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn band(&self, band: Subband) -> &[f64] {
        &self.bands[band as usize]
    }

    pub fn bands(&self) -> impl Iterator<Item = (Subband, &[f64])> {
        Subband::ALL.into_iter().map(|b| (b, self.band(b)))
    }

    /// Total number of coefficients across all subbands and channels.
    pub fn len(&self) -> usize {
        4 * self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn energy(&self) -> f64 {
        self.bands.iter().flatten().map(|x| x * x).sum()
    }

    /// Channel-stacked view `[LL, LH, HL, HH]`, `4C × H/2 × W/2`.
    pub fn stacked(&self) -> LatentTensor {
        let data = self.bands.concat();
        LatentTensor {
            channels: 4 * self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Coefficients in stacked order without building a tensor.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.bands.iter().flatten().copied()
    }
}

/// A separable one-level 2D wavelet with perfect reconstruction.
pub trait Wavelet2d {
    fn forward(&self, latent: &LatentTensor) -> Result<SubbandTensor>;
    fn inverse(&self, subbands: &SubbandTensor) -> Result<LatentTensor>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Haar;

impl Wavelet2d for Haar {
    fn forward(&self, latent: &LatentTensor) -> Result<SubbandTensor> {
        let (channels, height, width) = latent.shape();
        if height % 2 != 0 || width % 2 != 0 {
            return Err(WaveletError::OddDimension { height, width });
        }
        let (hh_, hw) = (height / 2, width / 2);
        let n = channels * hh_ * hw;
        let mut out = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for plane in latent.data.chunks_exact(height * width) {
            for i in 0..hh_ {
                let top = &plane[2 * i * width..(2 * i + 1) * width];
                let bottom = &plane[(2 * i + 1) * width..(2 * i + 2) * width];
                for j in 0..hw {
                    let (a, b) = (top[2 * j], top[2 * j + 1]);
                    let (c, d) = (bottom[2 * j], bottom[2 * j + 1]);
                    out[0].push(0.5 * (a + b + c + d));
                    out[1].push(0.5 * (a + b - c - d));
                    out[2].push(0.5 * (a - b + c - d));
                    out[3].push(0.5 * (a - b - c + d));
                }
            }
        }
        SubbandTensor::new(channels, hh_, hw, out)
    }

    fn inverse(&self, subbands: &SubbandTensor) -> Result<LatentTensor> {
        let (channels, hh_, hw) = (subbands.channels, subbands.height, subbands.width);
        let (height, width) = (2 * hh_, 2 * hw);
        let mut data = vec![0.0; channels * height * width];
        let [ll, lh, hl, hh] = &subbands.bands;
        for (c, plane) in data.chunks_exact_mut(height * width).enumerate() {
            for i in 0..hh_ {
                for j in 0..hw {
                    let s = (c * hh_ + i) * hw + j;
                    let (l0, l1, l2, l3) = (ll[s], lh[s], hl[s], hh[s]);
                    plane[2 * i * width + 2 * j] = 0.5 * (l0 + l1 + l2 + l3);
                    plane[2 * i * width + 2 * j + 1] = 0.5 * (l0 + l1 - l2 - l3);
                    plane[(2 * i + 1) * width + 2 * j] = 0.5 * (l0 - l1 + l2 - l3);
                    plane[(2 * i + 1) * width + 2 * j + 1] = 0.5 * (l0 - l1 - l2 + l3);
                }
            }
        }
        LatentTensor::new(channels, height, width, data)
    }
}

/// One-level orthonormal Haar analysis.
pub fn dwt_forward(latent: &LatentTensor) -> Result<SubbandTensor> {
    Haar.forward(latent)
}

/// Haar synthesis; exact inverse of [`dwt_forward`] up to rounding.
pub fn dwt_inverse(subbands: &SubbandTensor) -> Result<LatentTensor> {
    Haar.inverse(subbands)
}

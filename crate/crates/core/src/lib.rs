//! Numeric kernels and batch tooling for native-4K multi-aspect image generation.
//!
//! The crate is split by concern:
//!
//! - [`rope`]: per-axis rotary spectra, integer-cycle snapping, band-wise
//!   extrapolation scaling and the phase diagnostics built on top of them.
//! - [`wavelet`]: one-level orthonormal 2D Haar transform with channel-stacked
//!   subbands, plus subband energy/tail statistics and a flat latent file format.
//! - [`objective`]: the SNR-weighted Pseudo-Huber wavelet flow-matching loss with
//!   a hand-derived gradient, and the VAE decoder loss combiner.
//! - [`curriculum`]: stage definitions pairing a timestep band with an aesthetic
//!   percentile, and the matching record filter and timestep sampler.
//! - [`curation`]: the dataset curation pipeline (resolution gate, flatness,
//!   entropy, score filters, dedup, aspect-ratio bucketing, audit).
//! - [`ranking`]: the rank-based top-percentile selection shared by the
//!   curriculum and curation filters.

pub mod curation;
pub mod curriculum;
pub mod objective;
pub mod ranking;
pub mod rope;
pub mod wavelet;

//! Phase diagnostics comparing baseline and resonant spectra.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use super::{yarn_ramp, Result, RopeError, RotarySpectrum, AxisSpectra};

/// Reduces an angle to `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureRow {
    pub band: usize,
    pub baseline: f64,
    pub resonant: f64,
}

/// Phase mismatch `|wrap(L·ω_k)|` at the end of the training window for both
/// spectra, band by band.
pub fn phase_closure_report(
    baseline: &RotarySpectrum,
    resonant: &RotarySpectrum,
    train_len: u32,
) -> Result<Vec<ClosureRow>> {
    check_bands(baseline, resonant)?;
    let len = f64::from(train_len);
    Ok(baseline
        .omega()
        .iter()
        .zip(resonant.omega())
        .enumerate()
        .map(|(band, (w, w_hat))| ClosureRow {
            band,
            baseline: wrap_angle(len * w).abs(),
            resonant: wrap_angle(len * w_hat).abs(),
        })
        .collect())
}

/// Band × position matrix of `|wrap(p·ω_k − p·ω̂_k)|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftMap {
    pub positions: Vec<f64>,
    /// One row per band, one column per position.
    pub rows: Vec<Vec<f64>>,
}

impl DriftMap {
    pub fn get(&self, band: usize, position_index: usize) -> f64 {
        self.rows[band][position_index]
    }
}

pub fn phase_drift_map(
    baseline: &RotarySpectrum,
    resonant: &RotarySpectrum,
    positions: &[f64],
) -> Result<DriftMap> {
    check_bands(baseline, resonant)?;
    let valid = positions.iter().all(|p| p.is_finite() && *p >= 0.0)
        && positions.windows(2).all(|w| w[0] <= w[1]);
    if !valid {
        return Err(RopeError::UnsortedPositions);
    }
    let rows = baseline
        .omega()
        .iter()
        .zip(resonant.omega())
        .map(|(w, w_hat)| {
            positions
                .iter()
                .map(|p| wrap_angle(p * w - p * w_hat).abs())
                .collect()
        })
        .collect();
    Ok(DriftMap {
        positions: positions.to_vec(),
        rows,
    })
}

fn check_bands(a: &RotarySpectrum, b: &RotarySpectrum) -> Result<()> {
    if a.bands() != b.bands() {
        return Err(RopeError::BandCountMismatch(a.bands(), b.bands()));
    }
    Ok(())
}

/// `cos(h·ω_H + w·ω_W)` over an `height × width` patch grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl PhaseGrid {
    pub fn at(&self, h: usize, w: usize) -> f64 {
        self.values[h * self.width + w]
    }

    /// Maps `[-1, 1]` linearly onto `[0, 255]`.
    pub fn to_gray_bytes(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

pub fn cosine_pattern_2d(
    height_spectrum: &RotarySpectrum,
    band_h: usize,
    width_spectrum: &RotarySpectrum,
    band_w: usize,
    height: usize,
    width: usize,
) -> Result<PhaseGrid> {
    let omega_h = *height_spectrum
        .omega()
        .get(band_h)
        .ok_or(RopeError::BandOutOfRange {
            band: band_h,
            bands: height_spectrum.bands(),
        })?;
    let omega_w = *width_spectrum
        .omega()
        .get(band_w)
        .ok_or(RopeError::BandOutOfRange {
            band: band_w,
            bands: width_spectrum.bands(),
        })?;
    Ok(cosine_grid(omega_h, omega_w, height, width))
}

pub(crate) fn cosine_grid(omega_h: f64, omega_w: f64, height: usize, width: usize) -> PhaseGrid {
    let mut values = Vec::with_capacity(height * width);
    for h in 0..height {
        for w in 0..width {
            values.push((h as f64 * omega_h + w as f64 * omega_w).cos());
        }
    }
    PhaseGrid {
        height,
        width,
        values,
    }
}

/// One row of the per-band summary table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandRow {
    pub k: usize,
    pub omega: f64,
    pub cycles: f64,
    pub snapped: u64,
    pub omega_resonant: f64,
    pub gamma: f64,
    pub omega_yarn: f64,
}

pub fn band_table(spectra: &AxisSpectra) -> Vec<BandRow> {
    (0..spectra.baseline.bands())
        .map(|k| {
            let snapped = spectra.resonant.snapped()[k];
            BandRow {
                k,
                omega: spectra.baseline.omega()[k],
                cycles: spectra.baseline.cycles()[k],
                snapped,
                omega_resonant: spectra.resonant.omega()[k],
                gamma: yarn_ramp(snapped as f64, &spectra.ramp),
                omega_yarn: spectra.yarn.omega()[k],
            }
        })
        .collect()
}

//! Per-axis rotary spectra for 2D patch grids.
//!
//! Each spatial axis carries its own set of `d_a / 2` rotary bands. A spectrum
//! goes through up to three forms:
//!
//! 1. [`base_frequencies`]: the geometric ladder `ω_k = (b·η)^(-2k/d_a)`.
//! 2. [`snap_to_resonance`]: every band is projected onto the nearest nonzero
//!    integer number of cycles over the training window, so that the phase at
//!    `p = L_a` closes exactly on a multiple of `2π`.
//! 3. [`apply_yarn`]: for inference windows larger than the training window,
//!    each resonant band is blended between position interpolation (`ω̂ / s`)
//!    and no scaling, gated by a linear ramp on its integer cycle count.
//!
//! Height and width are handled fully independently; nothing here assumes a
//! square training window.

mod diagnostics;

pub use diagnostics::{
    band_table, cosine_pattern_2d, phase_closure_report, phase_drift_map, wrap_angle, BandRow,
    ClosureRow, DriftMap, PhaseGrid,
};

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Training window used by the diagnostics when none is given, in patches.
pub const DEFAULT_TRAIN_WINDOW: u32 = 64;

#[derive(Debug, Error, PartialEq)]
pub enum RopeError {
    #[error("channel size must be a positive even integer, got {0}")]
    OddChannels(usize),
    #[error("{axis} length must be at least 1 patch")]
    EmptyWindow { axis: &'static str },
    #[error("rotary base must be > 1, got {0}")]
    InvalidBase(f64),
    #[error("NTK factor must be >= 1, got {0}")]
    InvalidNtkFactor(f64),
    #[error(
        "yarn ramp requires 0 <= ramp_low < ramp_high, got ramp_low={low}, ramp_high={high}"
    )]
    InvalidRamp { low: f64, high: f64 },
    #[error("extrapolation scale must be >= 1, got {0}")]
    ScaleBelowOne(f64),
    #[error("expected a {expected:?} spectrum, got {actual:?}")]
    WrongVariant {
        expected: SpectrumVariant,
        actual: SpectrumVariant,
    },
    #[error("feature length {features} does not match 2 x {bands} bands")]
    LengthMismatch { features: usize, bands: usize },
    #[error("band {band} out of range for a spectrum with {bands} bands")]
    BandOutOfRange { band: usize, bands: usize },
    #[error("spectra have different band counts ({0} vs {1})")]
    BandCountMismatch(usize, usize),
    #[error("positions must be finite, non-negative and sorted ascending")]
    UnsortedPositions,
    #[error("position must be finite and non-negative, got {0}")]
    NegativePosition(f64),
}

pub type Result<T> = std::result::Result<T, RopeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Height,
    Width,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Height => "height",
            Axis::Width => "width",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Geometry of one spatial axis: rotary channel budget plus training and
/// inference window lengths in patches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    axis: Axis,
    channels: usize,
    train_len: u32,
    infer_len: u32,
}

impl AxisSpec {
    pub fn new(axis: Axis, channels: usize, train_len: u32, infer_len: u32) -> Result<Self> {
        if channels == 0 || channels % 2 != 0 {
            return Err(RopeError::OddChannels(channels));
        }
        if train_len == 0 {
            return Err(RopeError::EmptyWindow {
                axis: "training window",
            });
        }
        if infer_len == 0 {
            return Err(RopeError::EmptyWindow {
                axis: "inference window",
            });
        }
        Ok(Self {
            axis,
            channels,
            train_len,
            infer_len,
        })
    }

    /// Same axis with the inference window equal to the training window.
    pub fn at_train_scale(axis: Axis, channels: usize, train_len: u32) -> Result<Self> {
        Self::new(axis, channels, train_len, train_len)
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of complex pairs (`d_a / 2`).
    pub fn bands(&self) -> usize {
        self.channels / 2
    }

    pub fn train_len(&self) -> u32 {
        self.train_len
    }

    pub fn infer_len(&self) -> u32 {
        self.infer_len
    }

    /// Extrapolation scale `L'_a / L_a`.
    pub fn scale(&self) -> f64 {
        f64::from(self.infer_len) / f64::from(self.train_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeBaseConfig {
    base: f64,
    ntk_factor: f64,
}

impl RopeBaseConfig {
    pub fn new(base: f64, ntk_factor: f64) -> Result<Self> {
        if !(base > 1.0 && base.is_finite()) {
            return Err(RopeError::InvalidBase(base));
        }
        if !(ntk_factor >= 1.0 && ntk_factor.is_finite()) {
            return Err(RopeError::InvalidNtkFactor(ntk_factor));
        }
        Ok(Self { base, ntk_factor })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn ntk_factor(&self) -> f64 {
        self.ntk_factor
    }
}

impl Default for RopeBaseConfig {
    fn default() -> Self {
        Self {
            base: 10_000.0,
            ntk_factor: 1.0,
        }
    }
}

/// Linear ramp bounds on the integer cycle count, `0 <= low < high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YarnRampConfig {
    low: f64,
    high: f64,
}

impl YarnRampConfig {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low >= 0.0 && low < high && high.is_finite()) {
            return Err(RopeError::InvalidRamp { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumVariant {
    Baseline,
    Resonant,
    ResonantYarn,
}

/// Frequencies for every band of one axis, with their cycle counts over the
/// training window.
///
/// `cycles[k]` is `L_a·ω_k / 2π` for this spectrum's own frequencies.
/// `snapped[k]` is the integer cycle count `r̂_k`: for a baseline spectrum it
/// is what snapping would produce, for resonant spectra it is the count the
/// frequencies were built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotarySpectrum {
    axis: Axis,
    variant: SpectrumVariant,
    train_len: u32,
    omega: Vec<f64>,
    cycles: Vec<f64>,
    snapped: Vec<u64>,
}

impl RotarySpectrum {
    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn variant(&self) -> SpectrumVariant {
        self.variant
    }

    pub fn train_len(&self) -> u32 {
        self.train_len
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn cycles(&self) -> &[f64] {
        &self.cycles
    }

    pub fn snapped(&self) -> &[u64] {
        &self.snapped
    }

    pub fn bands(&self) -> usize {
        self.omega.len()
    }

    /// Wavelength of each band in patches, `2π / ω_k`.
    pub fn wavelengths(&self) -> Vec<f64> {
        self.omega.iter().map(|w| TAU / w).collect()
    }

    fn expect(&self, expected: SpectrumVariant) -> Result<()> {
        if self.variant == expected {
            Ok(())
        } else {
            Err(RopeError::WrongVariant {
                expected,
                actual: self.variant,
            })
        }
    }
}

/// `ω_k = (b·η)^(-2k/d_a)` for `k = 0..d_a/2`.
pub fn base_frequencies(axis: &AxisSpec, cfg: &RopeBaseConfig) -> RotarySpectrum {
    let effective_base = cfg.base * cfg.ntk_factor;
    let d = axis.channels as f64;
    let omega: Vec<f64> = (0..axis.bands())
        .map(|k| effective_base.powf(-(2.0 * k as f64) / d))
        .collect();
    let cycles = cycles_for(&omega, axis.train_len);
    let snapped = cycles.iter().map(|&r| snap_cycle(r)).collect();
    RotarySpectrum {
        axis: axis.axis,
        variant: SpectrumVariant::Baseline,
        train_len: axis.train_len,
        omega,
        cycles,
        snapped,
    }
}

/// Cycles completed by each band over `train_len` patches, `L·ω_k / 2π`.
pub fn cycle_counts(spectrum: &RotarySpectrum, train_len: u32) -> Vec<f64> {
    cycles_for(&spectrum.omega, train_len)
}

fn cycles_for(omega: &[f64], train_len: u32) -> Vec<f64> {
    let len = f64::from(train_len);
    omega.iter().map(|w| len * w / TAU).collect()
}

/// `max(1, ⌊r + ½⌋)`: ties round up.
pub fn snap_cycle(r: f64) -> u64 {
    let rounded = (r + 0.5).floor();
    if rounded < 1.0 {
        1
    } else {
        rounded as u64
    }
}

/// Frequency completing exactly `cycles` periods over `train_len` patches.
pub fn resonant_frequency(cycles: u64, train_len: u32) -> f64 {
    TAU * cycles as f64 / f64::from(train_len)
}

/// Projects every band onto its nearest nonzero integer cycle count over the
/// training window. Snapping an already resonant spectrum returns identical
/// frequencies.
pub fn snap_to_resonance(spectrum: &RotarySpectrum, train_len: u32) -> RotarySpectrum {
    let snapped: Vec<u64> = cycles_for(&spectrum.omega, train_len)
        .into_iter()
        .map(snap_cycle)
        .collect();
    let omega: Vec<f64> = snapped
        .iter()
        .map(|&r| resonant_frequency(r, train_len))
        .collect();
    let cycles = snapped.iter().map(|&r| r as f64).collect();
    RotarySpectrum {
        axis: spectrum.axis,
        variant: SpectrumVariant::Resonant,
        train_len,
        omega,
        cycles,
        snapped,
    }
}

/// Linear ramp: 0 below `low`, 1 above `high`, linear in between.
pub fn yarn_ramp(cycles: f64, cfg: &YarnRampConfig) -> f64 {
    if cycles < cfg.low {
        0.0
    } else if cycles > cfg.high {
        1.0
    } else {
        (cycles - cfg.low) / (cfg.high - cfg.low)
    }
}

/// Band-wise blend between `ω̂ / s` (position interpolation) and `ω̂`.
///
/// At `s = 1` the resonant frequencies are returned bit-for-bit.
pub fn apply_yarn(
    spectrum: &RotarySpectrum,
    axis: &AxisSpec,
    ramp: &YarnRampConfig,
) -> Result<RotarySpectrum> {
    spectrum.expect(SpectrumVariant::Resonant)?;
    let scale = axis.scale();
    if !(scale >= 1.0) {
        return Err(RopeError::ScaleBelowOne(scale));
    }
    let omega: Vec<f64> = if scale == 1.0 {
        spectrum.omega.clone()
    } else {
        spectrum
            .omega
            .iter()
            .zip(&spectrum.snapped)
            .map(|(&w, &r)| {
                let gamma = yarn_ramp(r as f64, ramp);
                (1.0 - gamma) * (w / scale) + gamma * w
            })
            .collect()
    };
    let cycles = cycles_for(&omega, spectrum.train_len);
    Ok(RotarySpectrum {
        axis: spectrum.axis,
        variant: SpectrumVariant::ResonantYarn,
        train_len: spectrum.train_len,
        omega,
        cycles,
        snapped: spectrum.snapped.clone(),
    })
}

/// Per-band phases `p·ω_k` at a position in patches.
pub fn phase(spectrum: &RotarySpectrum, position: f64) -> Result<Vec<f64>> {
    if !(position >= 0.0 && position.is_finite()) {
        return Err(RopeError::NegativePosition(position));
    }
    Ok(spectrum.omega.iter().map(|w| position * w).collect())
}

/// Rotates interleaved `(x, y)` pairs by the matching band phase, i.e.
/// `(x + iy)·e^{iφ}`.
pub fn rotate_pairs(features: &[f64], phases: &[f64]) -> Result<Vec<f64>> {
    if features.len() != 2 * phases.len() {
        return Err(RopeError::LengthMismatch {
            features: features.len(),
            bands: phases.len(),
        });
    }
    let mut out = Vec::with_capacity(features.len());
    for (pair, &phi) in features.chunks_exact(2).zip(phases) {
        let (sin, cos) = phi.sin_cos();
        let (x, y) = (pair[0], pair[1]);
        out.push(x * cos - y * sin);
        out.push(x * sin + y * cos);
    }
    Ok(out)
}

/// Everything one axis needs for diagnostics: baseline, resonant and
/// YaRN-scaled spectra built from the same configuration.
#[derive(Debug, Clone)]
pub struct AxisSpectra {
    pub spec: AxisSpec,
    pub baseline: RotarySpectrum,
    pub resonant: RotarySpectrum,
    pub yarn: RotarySpectrum,
    pub ramp: YarnRampConfig,
}

impl AxisSpectra {
    pub fn build(spec: AxisSpec, base: &RopeBaseConfig, ramp: YarnRampConfig) -> Result<Self> {
        let baseline = base_frequencies(&spec, base);
        let resonant = snap_to_resonance(&baseline, spec.train_len);
        let yarn = apply_yarn(&resonant, &spec, &ramp)?;
        Ok(Self {
            spec,
            baseline,
            resonant,
            yarn,
            ramp,
        })
    }
}

/// Largest frequency displacement snapping can cause on a band that
/// completes at least half a cycle: half a cycle over the window.
pub fn snap_bound(train_len: u32) -> f64 {
    PI / f64::from(train_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(d: usize, l: u32) -> AxisSpec {
        AxisSpec::at_train_scale(Axis::Height, d, l).unwrap()
    }

    fn spectrum_from(omega: Vec<f64>, train_len: u32) -> RotarySpectrum {
        let cycles = cycles_for(&omega, train_len);
        let snapped = cycles.iter().map(|&r| snap_cycle(r)).collect();
        RotarySpectrum {
            axis: Axis::Width,
            variant: SpectrumVariant::Baseline,
            train_len,
            omega,
            cycles,
            snapped,
        }
    }

    #[test]
    fn base_frequency_examples() {
        let s = base_frequencies(&axis(8, 64), &RopeBaseConfig::default());
        assert_eq!(s.bands(), 4);
        assert_eq!(s.omega()[0], 1.0);
        assert!((s.omega()[2] - 0.01).abs() < 1e-15);
        assert!(s.omega().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ntk_factor_lowers_frequencies() {
        let plain = base_frequencies(&axis(8, 64), &RopeBaseConfig::new(10_000.0, 1.0).unwrap());
        let ntk = base_frequencies(&axis(8, 64), &RopeBaseConfig::new(10_000.0, 2.0).unwrap());
        assert_eq!(plain.omega()[0], ntk.omega()[0]);
        for k in 1..4 {
            assert!(ntk.omega()[k] < plain.omega()[k]);
        }
    }

    #[test]
    fn rejects_bad_axis_and_base() {
        assert_eq!(
            AxisSpec::new(Axis::Width, 7, 64, 64),
            Err(RopeError::OddChannels(7))
        );
        assert!(AxisSpec::new(Axis::Width, 8, 0, 64).is_err());
        assert!(RopeBaseConfig::new(1.0, 1.0).is_err());
        assert!(RopeBaseConfig::new(10.0, 0.5).is_err());
    }

    #[test]
    fn cycle_count_examples() {
        let l = 64;
        let s = spectrum_from(vec![TAU / 64.0, PI / 64.0, 1.0], l);
        let r = cycle_counts(&s, l);
        assert!((r[0] - 1.0).abs() < 1e-15);
        assert!((r[1] - 0.5).abs() < 1e-15);
        assert!((r[2] - 10.185_916_357_881_302).abs() < 1e-12);
    }

    #[test]
    fn snapping_examples() {
        assert_eq!(snap_cycle(0.3), 1);
        assert_eq!(snap_cycle(0.0), 1);
        assert_eq!(snap_cycle(2.5), 3);
        assert_eq!(snap_cycle(2.4999), 2);

        let s = spectrum_from(vec![1.0, TAU * 3.0 / 64.0], 64);
        let snapped = snap_to_resonance(&s, 64);
        assert_eq!(snapped.snapped(), &[10, 3]);
        assert!((snapped.omega()[0] - 0.981_747_704_246_810_3).abs() < 1e-15);
        assert_eq!(snapped.omega()[1], TAU * 3.0 / 64.0);
        assert_eq!(snapped.variant(), SpectrumVariant::Resonant);
    }

    #[test]
    fn snapping_is_a_fixed_point() {
        let base = base_frequencies(&axis(64, 48), &RopeBaseConfig::default());
        let once = snap_to_resonance(&base, 48);
        let twice = snap_to_resonance(&once, 48);
        assert_eq!(once.omega(), twice.omega());
        assert_eq!(once.snapped(), twice.snapped());
    }

    #[test]
    fn ramp_branches() {
        let cfg = YarnRampConfig::new(1.0, 3.0).unwrap();
        assert_eq!(yarn_ramp(0.5, &cfg), 0.0);
        assert_eq!(yarn_ramp(4.0, &cfg), 1.0);
        assert_eq!(yarn_ramp(2.0, &cfg), 0.5);
        assert_eq!(yarn_ramp(1.0, &cfg), 0.0);
        assert_eq!(yarn_ramp(3.0, &cfg), 1.0);
    }

    #[test]
    fn ramp_rejects_inverted_bounds() {
        assert_eq!(
            YarnRampConfig::new(1.25, 0.75),
            Err(RopeError::InvalidRamp {
                low: 1.25,
                high: 0.75
            })
        );
        assert!(YarnRampConfig::new(1.0, 1.0).is_err());
        assert!(YarnRampConfig::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn yarn_endpoints_and_identity() {
        let spec = AxisSpec::new(Axis::Width, 16, 64, 128).unwrap();
        let base = base_frequencies(&spec, &RopeBaseConfig::default());
        let res = snap_to_resonance(&base, 64);
        let ramp = YarnRampConfig::new(2.0, 4.0).unwrap();
        let yarn = apply_yarn(&res, &spec, &ramp).unwrap();
        for k in 0..res.bands() {
            let r = res.snapped()[k] as f64;
            if r > 4.0 {
                assert_eq!(yarn.omega()[k], res.omega()[k]);
            } else if r < 2.0 {
                assert_eq!(yarn.omega()[k], res.omega()[k] / 2.0);
            }
        }
        let unit = AxisSpec::at_train_scale(Axis::Width, 16, 64).unwrap();
        let same = apply_yarn(&res, &unit, &ramp).unwrap();
        assert_eq!(same.omega(), res.omega());
    }

    #[test]
    fn yarn_requires_resonant_input_and_scale_at_least_one() {
        let spec = AxisSpec::new(Axis::Width, 16, 64, 32).unwrap();
        let base = base_frequencies(&spec, &RopeBaseConfig::default());
        let ramp = YarnRampConfig::new(1.0, 2.0).unwrap();
        assert!(matches!(
            apply_yarn(&base, &spec, &ramp),
            Err(RopeError::WrongVariant { .. })
        ));
        let res = snap_to_resonance(&base, 64);
        assert_eq!(
            apply_yarn(&res, &spec, &ramp),
            Err(RopeError::ScaleBelowOne(0.5))
        );
    }

    #[test]
    fn phase_examples() {
        let s = base_frequencies(&axis(16, 64), &RopeBaseConfig::default());
        assert!(phase(&s, 0.0).unwrap().iter().all(|&p| p == 0.0));
        let two = spectrum_from(vec![TAU * 2.0 / 64.0], 64);
        assert!((phase(&two, 32.0).unwrap()[0] - TAU).abs() < 1e-12);
        assert!(phase(&two, -1.0).is_err());
    }

    #[test]
    fn rotation_examples() {
        let x = [0.3, -1.2, 2.0, 0.5];
        assert_eq!(rotate_pairs(&x, &[0.0, 0.0]).unwrap(), x.to_vec());
        let half = rotate_pairs(&x, &[PI, PI]).unwrap();
        for (a, b) in half.iter().zip(&x) {
            assert!((a + b).abs() < 1e-15);
        }
        assert!(matches!(
            rotate_pairs(&x, &[0.0]),
            Err(RopeError::LengthMismatch { .. })
        ));
    }
}

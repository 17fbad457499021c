//! SNR-weighted Pseudo-Huber wavelet loss for straight-path flow matching.
//!
//! With `z_t = (1-t)·z + t·ε` and a velocity prediction `v`, the data
//! prediction is `ẑ = z_t - t·v`. The residual is measured in the one-level
//! Haar space, `R = W(ẑ) - W(z)`, and the per-sample loss is
//!
//! ```text
//! L = ω(t) · (1/N) · Σ_p ρ_{c(t)}(R_p)
//! ω(t) = t/(1-t) · min(SNR(t), γ_s)^β_w,      SNR(t) = (1-t)²/t²
//! c(t) = c_min + (c_max - c_min) · (min(SNR(t), γ_s)/γ_s)^α_c
//! ρ_c(r) = c² (√(1 + (r/c)²) - 1)
//! ```
//!
//! where `N` counts every coefficient of the stacked subbands (equal to
//! `C·H·W`). Because `W` is linear and orthonormal, `∂L/∂ẑ = Wᵀ(∂L/∂R) =
//! W⁻¹(∂L/∂R)`, and `∂L/∂v = -t · ∂L/∂ẑ`.
//!
//! Parameter names `gamma_s`, `beta_w`, `alpha_c` are distinct from the ramp
//! bounds used by the rotary module even though they share Greek letters in
//! the usual notation.

pub mod gradcheck;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavelet::{dwt_forward, dwt_inverse, LatentTensor, SubbandTensor, WaveletError};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("t must lie strictly inside (0, 1), got {0}")]
    TimeOutOfRange(f64),
    #[error("Min-SNR clip gamma_s must be > 0, got {0}")]
    InvalidClip(f64),
    #[error("Min-SNR exponent beta_w must be >= 0, got {0}")]
    InvalidWeightExponent(f64),
    #[error("Huber schedule requires 0 < c_min <= c_max, got c_min={c_min}, c_max={c_max}")]
    InvalidThresholds { c_min: f64, c_max: f64 },
    #[error("Huber schedule exponent alpha_c must be in [0, 1], got {0}")]
    InvalidThresholdExponent(f64),
    #[error("Pseudo-Huber threshold must be > 0, got {0}")]
    InvalidHuberScale(f64),
    #[error("VAE loss weights must be non-negative and not all zero")]
    InvalidVaeWeights,
    #[error("VAE loss term {name} must be non-negative, got {value}")]
    NegativeTerm { name: &'static str, value: f64 },
    #[error("batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

fn check_time(t: f64) -> Result<f64> {
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(ObjectiveError::TimeOutOfRange(t))
    }
}

/// Clean latent, noise and time for one straight-path training draw.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    clean: LatentTensor,
    noise: LatentTensor,
    t: f64,
}

impl FlowSample {
    pub fn new(clean: LatentTensor, noise: LatentTensor, t: f64) -> Result<Self> {
        clean.ensure_same_shape(&noise)?;
        check_time(t)?;
        Ok(Self { clean, noise, t })
    }

    pub fn clean(&self) -> &LatentTensor {
        &self.clean
    }

    pub fn noise(&self) -> &LatentTensor {
        &self.noise
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Velocity of the straight path, `ε - z`.
    pub fn target_velocity(&self) -> LatentTensor {
        self.noise
            .affine(1.0, &self.clean, -1.0)
            .expect("shapes checked at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinSnrConfig {
    pub gamma_s: f64,
    pub beta_w: f64,
}

impl MinSnrConfig {
    pub fn new(gamma_s: f64, beta_w: f64) -> Result<Self> {
        let cfg = Self { gamma_s, beta_w };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_s > 0.0) {
            return Err(ObjectiveError::InvalidClip(self.gamma_s));
        }
        if !(self.beta_w >= 0.0 && self.beta_w.is_finite()) {
            return Err(ObjectiveError::InvalidWeightExponent(self.beta_w));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HuberSchedule {
    pub c_min: f64,
    pub c_max: f64,
    pub alpha_c: f64,
}

impl HuberSchedule {
    pub const DEFAULT_C_MIN: f64 = 0.2;
    pub const DEFAULT_C_MAX: f64 = 1.0;

    pub fn new(c_min: f64, c_max: f64, alpha_c: f64) -> Result<Self> {
        let s = Self {
            c_min,
            c_max,
            alpha_c,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_min <= self.c_max) {
            return Err(ObjectiveError::InvalidThresholds {
                c_min: self.c_min,
                c_max: self.c_max,
            });
        }
        if !(0.0..=1.0).contains(&self.alpha_c) {
            return Err(ObjectiveError::InvalidThresholdExponent(self.alpha_c));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub min_snr: MinSnrConfig,
    pub huber: HuberSchedule,
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        self.min_snr.validate()?;
        self.huber.validate()
    }
}

/// `z_t = (1-t)·z + t·ε`.
pub fn interpolate(sample: &FlowSample) -> LatentTensor {
    let t = sample.t;
    sample
        .clean
        .affine(1.0 - t, &sample.noise, t)
        .expect("shapes checked at construction")
}

/// `ẑ = z_t - t·v`.
pub fn data_prediction(z_t: &LatentTensor, v_pred: &LatentTensor, t: f64) -> Result<LatentTensor> {
    check_time(t)?;
    Ok(z_t.affine(1.0, v_pred, -t)?)
}

/// `(1-t)² / t²`.
pub fn snr(t: f64) -> Result<f64> {
    check_time(t)?;
    let ratio = (1.0 - t) / t;
    Ok(ratio * ratio)
}

/// `ω(t) = t/(1-t) · min(SNR(t), γ_s)^β_w`.
pub fn timestep_weight(t: f64, cfg: &MinSnrConfig) -> Result<f64> {
    let s = snr(t)?;
    Ok(t / (1.0 - t) * s.min(cfg.gamma_s).powf(cfg.beta_w))
}

/// `c(t) = c_min + (c_max - c_min)·(min(SNR, γ_s)/γ_s)^α_c`.
pub fn huber_threshold(t: f64, schedule: &HuberSchedule, min_snr: &MinSnrConfig) -> Result<f64> {
    schedule.validate()?;
    let s = snr(t)?;
    let ratio = s.min(min_snr.gamma_s) / min_snr.gamma_s;
    Ok(schedule.c_min + (schedule.c_max - schedule.c_min) * ratio.powf(schedule.alpha_c))
}

/// Pseudo-Huber penalty and its derivative in `r`.
///
/// Evaluated as `r² / (√(1+(r/c)²) + 1)`, which is algebraically equal to
/// `c²(√(1+(r/c)²) - 1)` but does not cancel for `|r| ≪ c`.
pub fn pseudo_huber(r: f64, c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0) {
        return Err(ObjectiveError::InvalidHuberScale(c));
    }
    Ok(pseudo_huber_unchecked(r, c))
}

#[inline]
fn pseudo_huber_unchecked(r: f64, c: f64) -> (f64, f64) {
    let root = (r / c).hypot(1.0);
    (r * r / (root + 1.0), r / root)
}

/// Loss value plus everything needed to inspect it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub loss: f64,
    pub weight: f64,
    pub threshold: f64,
    /// Number of wavelet coefficients averaged over.
    pub coefficients: usize,
    /// `∂loss/∂v_pred`, same shape as the prediction.
    pub gradient: LatentTensor,
}

fn wavelet_residual(sample: &FlowSample, v_pred: &LatentTensor) -> Result<SubbandTensor> {
    let z_t = interpolate(sample);
    let z_hat = data_prediction(&z_t, v_pred, sample.t)?;
    let predicted = dwt_forward(&z_hat)?;
    let clean = dwt_forward(&sample.clean)?;
    let bands = std::array::from_fn(|i| {
        let band = crate::wavelet::Subband::ALL[i];
        predicted
            .band(band)
            .iter()
            .zip(clean.band(band))
            .map(|(a, b)| a - b)
            .collect()
    });
    Ok(SubbandTensor::new(
        predicted.channels(),
        predicted.height(),
        predicted.width(),
        bands,
    )?)
}

/// Per-sample loss and its gradient with respect to `v_pred`.
pub fn snr_hw_loss(
    sample: &FlowSample,
    v_pred: &LatentTensor,
    cfg: &ObjectiveConfig,
) -> Result<LossEvaluation> {
    cfg.validate()?;
    let weight = timestep_weight(sample.t, &cfg.min_snr)?;
    let threshold = huber_threshold(sample.t, &cfg.huber, &cfg.min_snr)?;
    let residual = wavelet_residual(sample, v_pred)?;
    let n = residual.len();
    let scale = weight / n as f64;

    let mut total = 0.0;
    let grad_bands = std::array::from_fn(|i| {
        residual
            .band(crate::wavelet::Subband::ALL[i])
            .iter()
            .map(|&r| {
                let (rho, d_rho) = pseudo_huber_unchecked(r, threshold);
                total += rho;
                scale * d_rho
            })
            .collect()
    });
    let grad_residual = SubbandTensor::new(
        residual.channels(),
        residual.height(),
        residual.width(),
        grad_bands,
    )?;
    let t = sample.t;
    let gradient = dwt_inverse(&grad_residual)?.map(|g| -t * g);

    Ok(LossEvaluation {
        loss: scale * total,
        weight,
        threshold,
        coefficients: n,
        gradient,
    })
}

/// Mean of per-sample losses over a batch; each sample is weighted by its own
/// `ω(t)` before averaging. Gradients are scaled by `1/B` accordingly.
pub fn batch_loss(
    batch: &[(FlowSample, LatentTensor)],
    cfg: &ObjectiveConfig,
) -> Result<(f64, Vec<LatentTensor>)> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for (sample, v) in batch {
        let eval = snr_hw_loss(sample, v, cfg)?;
        loss += eval.loss * inv;
        grads.push(eval.gradient.map(|g| g * inv));
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeLossWeights {
    pub wavelet: f64,
    pub perceptual: f64,
    pub l2: f64,
}

impl VaeLossWeights {
    pub fn new(wavelet: f64, perceptual: f64, l2: f64) -> Result<Self> {
        let w = Self {
            wavelet,
            perceptual,
            l2,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.wavelet, self.perceptual, self.l2];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || all.iter().all(|w| *w == 0.0) {
            return Err(ObjectiveError::InvalidVaeWeights);
        }
        Ok(())
    }
}

impl Default for VaeLossWeights {
    fn default() -> Self {
        Self {
            wavelet: 0.2,
            perceptual: 0.1,
            l2: 1.0,
        }
    }
}

/// `λ_wav·wavelet + λ_perc·perceptual + λ_L2·l2`. The perceptual term comes from
/// an external feature network and is taken as a precomputed scalar.
pub fn vae_combined_loss(
    wavelet_hf: f64,
    perceptual: f64,
    l2: f64,
    weights: &VaeLossWeights,
) -> Result<f64> {
    for (name, value) in [("wavelet", wavelet_hf), ("perceptual", perceptual), ("l2", l2)] {
        if !(value >= 0.0) {
            return Err(ObjectiveError::NegativeTerm { name, value });
        }
    }
    Ok(weights.wavelet * wavelet_hf + weights.perceptual * perceptual + weights.l2 * l2)
}

/// `t_i = (i + ½)/n` for `i = 0..n`.
pub fn midpoint_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

pub const DEFAULT_GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub snr: f64,
    pub weight: f64,
    pub threshold: f64,
}

pub fn loss_curve(cfg: &ObjectiveConfig, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    grid.iter()
        .map(|&t| {
            Ok(CurvePoint {
                t,
                snr: snr(t)?,
                weight: timestep_weight(t, &cfg.min_snr)?,
                threshold: huber_threshold(t, &cfg.huber, &cfg.min_snr)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(gamma_s: f64, beta_w: f64, c_min: f64, c_max: f64, alpha_c: f64) -> ObjectiveConfig {
        ObjectiveConfig {
            min_snr: MinSnrConfig::new(gamma_s, beta_w).unwrap(),
            huber: HuberSchedule::new(c_min, c_max, alpha_c).unwrap(),
        }
    }

    fn tensor(seed: u64) -> LatentTensor {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        LatentTensor::from_fn(2, 4, 4, |_, _, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .unwrap()
    }

    #[test]
    fn interpolation_examples() {
        let z = tensor(1);
        let e = tensor(2);
        let mid = interpolate(&FlowSample::new(z.clone(), e.clone(), 0.5).unwrap());
        for ((m, a), b) in mid.data().iter().zip(z.data()).zip(e.data()) {
            assert!((m - 0.5 * (a + b)).abs() < 1e-15);
        }
        let zero = LatentTensor::zeros(2, 4, 4).unwrap();
        let scaled = interpolate(&FlowSample::new(zero, e.clone(), 0.3).unwrap());
        for (s, b) in scaled.data().iter().zip(e.data()) {
            assert!((s - 0.3 * b).abs() < 1e-15);
        }
        let t = 1e-6;
        let near = interpolate(&FlowSample::new(z.clone(), e.clone(), t).unwrap());
        let bound = e
            .data()
            .iter()
            .zip(z.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        for (n, a) in near.data().iter().zip(z.data()) {
            assert!((n - a).abs() <= t * bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn sample_rejects_bad_time_and_shape() {
        assert!(matches!(
            FlowSample::new(tensor(1), tensor(2), 1.0),
            Err(ObjectiveError::TimeOutOfRange(_))
        ));
        assert!(FlowSample::new(tensor(1), tensor(2), 0.0).is_err());
        let other = LatentTensor::zeros(1, 4, 4).unwrap();
        assert!(FlowSample::new(tensor(1), other, 0.5).is_err());
    }

    #[test]
    fn data_prediction_examples() {
        let sample = FlowSample::new(tensor(3), tensor(4), 0.37).unwrap();
        let z_t = interpolate(&sample);
        let zero = LatentTensor::zeros(2, 4, 4).unwrap();
        assert_eq!(data_prediction(&z_t, &zero, 0.37).unwrap(), z_t);
        let z_hat = data_prediction(&z_t, &sample.target_velocity(), 0.37).unwrap();
        for (a, b) in z_hat.data().iter().zip(sample.clean().data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn snr_examples() {
        assert_eq!(snr(0.5).unwrap(), 1.0);
        assert!((snr(0.25).unwrap() - 9.0).abs() < 1e-15);
        assert!(snr(1.0 - 1e-9).unwrap() < 1e-17);
        assert!(snr(1.0).is_err());
        assert!(snr(-0.1).is_err());
    }

    #[test]
    fn weight_examples() {
        let plain = MinSnrConfig::new(5.0, 0.0).unwrap();
        assert_eq!(timestep_weight(0.5, &plain).unwrap(), 1.0);
        let half = MinSnrConfig::new(1e300, 0.5).unwrap();
        for t in midpoint_grid(50) {
            assert!((timestep_weight(t, &half).unwrap() - 1.0).abs() < 1e-12);
        }
        let clipped = MinSnrConfig::new(5.0, 1.0).unwrap();
        assert!((timestep_weight(0.25, &clipped).unwrap() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        let c = cfg(5.0, 1.0, 0.2, 1.0, 0.5);
        // SNR(0.25) = 9 >= 5
        assert_eq!(huber_threshold(0.25, &c.huber, &c.min_snr).unwrap(), 1.0);
        let near_one = huber_threshold(1.0 - 1e-9, &c.huber, &c.min_snr).unwrap();
        assert!((near_one - 0.2).abs() < 1e-6);
        let flat = cfg(5.0, 1.0, 0.2, 1.0, 0.0);
        for t in midpoint_grid(100) {
            assert_eq!(huber_threshold(t, &flat.huber, &flat.min_snr).unwrap(), 1.0);
        }
        assert!(HuberSchedule::new(0.0, 1.0, 0.5).is_err());
        assert!(HuberSchedule::new(0.5, 0.4, 0.5).is_err());
        assert!(HuberSchedule::new(0.2, 1.0, 1.5).is_err());
    }

    #[test]
    fn pseudo_huber_examples() {
        assert_eq!(pseudo_huber(0.0, 1.0).unwrap(), (0.0, 0.0));
        let (v, _) = pseudo_huber(1.0, 1.0).unwrap();
        assert!((v - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let (v, _) = pseudo_huber(1.0, 1e6).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
        let (a, da) = pseudo_huber(-2.5, 0.7).unwrap();
        let (b, db) = pseudo_huber(2.5, 0.7).unwrap();
        assert_eq!(a, b);
        assert_eq!(da, -db);
        assert!(pseudo_huber(1.0, 0.0).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let sample = FlowSample::new(tensor(5), tensor(6), 0.6).unwrap();
        let c = cfg(5.0, 1.0, 0.2, 1.0, 0.5);
        let eval = snr_hw_loss(&sample, &sample.target_velocity(), &c).unwrap();
        assert!(eval.loss.abs() < 1e-28);
        assert_eq!(eval.coefficients, 32);
        assert!(eval.gradient.data().iter().all(|g| g.abs() < 1e-14));
    }

    #[test]
    fn batch_mean_of_samples() {
        let c = cfg(5.0, 0.5, 0.2, 1.0, 0.5);
        let a = (FlowSample::new(tensor(7), tensor(8), 0.3).unwrap(), tensor(9));
        let b = (FlowSample::new(tensor(10), tensor(11), 0.8).unwrap(), tensor(12));
        let la = snr_hw_loss(&a.0, &a.1, &c).unwrap().loss;
        let lb = snr_hw_loss(&b.0, &b.1, &c).unwrap().loss;
        let (mean, grads) = batch_loss(&[a, b], &c).unwrap();
        assert!((mean - 0.5 * (la + lb)).abs() < 1e-15);
        assert_eq!(grads.len(), 2);
        assert!(batch_loss(&[], &c).is_err());
    }

    #[test]
    fn vae_combiner_examples() {
        let w = VaeLossWeights::default();
        assert_eq!(vae_combined_loss(0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        assert!((vae_combined_loss(1.0, 1.0, 1.0, &w).unwrap() - 1.3).abs() < 1e-15);
        let l2_only = VaeLossWeights::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(vae_combined_loss(3.0, 4.0, 0.25, &l2_only).unwrap(), 0.25);
        assert!(vae_combined_loss(-1.0, 0.0, 0.0, &w).is_err());
        assert!(VaeLossWeights::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn curve_grid() {
        let grid = midpoint_grid(DEFAULT_GRID_POINTS);
        assert_eq!(grid.len(), 1000);
        assert_eq!(grid[0], 0.0005);
        assert_eq!(grid[999], 0.9995);
        let c = cfg(5.0, 1.0, 0.2, 1.0, 0.5);
        let curve = loss_curve(&c, &grid).unwrap();
        assert!(curve.windows(2).all(|w| w[1].snr < w[0].snr));
        assert!(curve.windows(2).all(|w| w[1].threshold <= w[0].threshold));
        assert!(curve.iter().all(|p| p.threshold >= 0.2 && p.threshold <= 1.0));
    }
}

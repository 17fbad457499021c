//! Central finite differences for checking hand-derived gradients.

use super::{snr_hw_loss, FlowSample, ObjectiveConfig, Result};
use crate::wavelet::LatentTensor;

pub const DEFAULT_STEP: f64 = 1e-4;

/// `(f(x + h·e_i) - f(x - h·e_i)) / 2h` for every coordinate.
pub fn central_difference(
    x: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise `|a - n| / max(|a|, |n|, floor)`, where `floor` is
/// `1e-3·max|n|`. The floor keeps coordinates whose true gradient is near
/// zero from dominating through cancellation noise alone.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

/// Compares the analytic `∂L/∂v_pred` against central differences of the loss.
pub fn check_loss_gradient(
    sample: &FlowSample,
    v_pred: &LatentTensor,
    cfg: &ObjectiveConfig,
    h: f64,
) -> Result<GradCheck> {
    let analytic = snr_hw_loss(sample, v_pred, cfg)?.gradient.into_data();
    let (c, hgt, w) = v_pred.shape();
    let mut failure = None;
    let numeric = central_difference(v_pred.data(), h, |x| {
        let v = LatentTensor::new(c, hgt, w, x.to_vec()).expect("same shape");
        match snr_hw_loss(sample, &v, cfg) {
            Ok(eval) => eval.loss,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let max_relative_error = max_relative_error(&analytic, &numeric);
    Ok(GradCheck {
        analytic,
        numeric,
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_difference_is_exact_enough() {
        let g = central_difference(&[1.0, -2.0], 1e-4, |x| x[0] * x[0] + 3.0 * x[1]);
        assert!((g[0] - 2.0).abs() < 1e-9);
        assert!((g[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(max_relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        let e = max_relative_error(&[2.0, 1e-12], &[2.0, 0.0]);
        assert!(e < 1e-6);
        assert!((max_relative_error(&[1.1], &[1.0]) - 0.1 / 1.1).abs() < 1e-12);
    }
}

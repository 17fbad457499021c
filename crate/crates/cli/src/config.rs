//! Declarative TOML configuration shared by every subcommand.
//!
//! Top-level sections are all optional. Inside a section, keys without a
//! default must be given; unknown keys are rejected with their line and column.

use std::fs;
use std::path::{Path, PathBuf};

use native4k::curation::CurationConfig;
use native4k::curriculum::CurriculumPlan;
use native4k::objective::{HuberSchedule, MinSnrConfig, ObjectiveConfig, VaeLossWeights};
use native4k::rope::{AxisSpec, Axis, RopeBaseConfig, YarnRampConfig, DEFAULT_TRAIN_WINDOW};
use native4k::wavelet::DEFAULT_TAIL_THRESHOLDS;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    /// Curation worker threads; 0 means one per core.
    pub workers: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub log_level: String,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            workers: 0,
            seed: 0,
            output_dir: PathBuf::from("out"),
            log_level: "info".into(),
        }
    }
}

fn default_base() -> f64 {
    10_000.0
}

fn one() -> f64 {
    1.0
}

fn default_window() -> u32 {
    DEFAULT_TRAIN_WINDOW
}

/// Rotary spectrum settings. Inference lengths default to the training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RopeSection {
    pub channels: usize,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default = "one")]
    pub ntk_factor: f64,
    #[serde(default = "default_window")]
    pub train_h: u32,
    #[serde(default = "default_window")]
    pub train_w: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infer_h: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infer_w: Option<u32>,
    pub ramp_low: f64,
    pub ramp_high: f64,
}

/// Fully validated rotary settings for both axes.
#[derive(Debug, Clone)]
pub struct RopeSettings {
    pub base: RopeBaseConfig,
    pub height: AxisSpec,
    pub width: AxisSpec,
    pub ramp: YarnRampConfig,
}

impl RopeSection {
    pub fn resolve(&self) -> Result<RopeSettings, CliError> {
        let err = |e: native4k::rope::RopeError| CliError::Config(format!("rope: {e}"));
        Ok(RopeSettings {
            base: RopeBaseConfig::new(self.base, self.ntk_factor).map_err(err)?,
            height: AxisSpec::new(
                Axis::Height,
                self.channels,
                self.train_h,
                self.infer_h.unwrap_or(self.train_h),
            )
            .map_err(err)?,
            width: AxisSpec::new(
                Axis::Width,
                self.channels,
                self.train_w,
                self.infer_w.unwrap_or(self.train_w),
            )
            .map_err(err)?,
            ramp: YarnRampConfig::new(self.ramp_low, self.ramp_high).map_err(err)?,
        })
    }
}

fn default_c_min() -> f64 {
    HuberSchedule::DEFAULT_C_MIN
}

fn default_c_max() -> f64 {
    HuberSchedule::DEFAULT_C_MAX
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub gamma_s: f64,
    pub beta_w: f64,
    pub alpha_c: f64,
    #[serde(default = "default_c_min")]
    pub c_min: f64,
    #[serde(default = "default_c_max")]
    pub c_max: f64,
}

impl ObjectiveSection {
    pub fn resolve(&self) -> Result<ObjectiveConfig, CliError> {
        let cfg = ObjectiveConfig {
            min_snr: MinSnrConfig {
                gamma_s: self.gamma_s,
                beta_w: self.beta_w,
            },
            huber: HuberSchedule {
                c_min: self.c_min,
                c_max: self.c_max,
                alpha_c: self.alpha_c,
            },
        };
        cfg.validate()
            .map_err(|e| CliError::Config(format!("objective: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeLossSection {
    pub wavelet: f64,
    pub perceptual: f64,
    pub l2: f64,
}

impl Default for VaeLossSection {
    fn default() -> Self {
        let w = VaeLossWeights::default();
        Self {
            wavelet: w.wavelet,
            perceptual: w.perceptual,
            l2: w.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveletSection {
    pub tail_thresholds: Vec<f64>,
    pub bins: usize,
}

impl Default for WaveletSection {
    fn default() -> Self {
        Self {
            tail_thresholds: DEFAULT_TAIL_THRESHOLDS.to_vec(),
            bins: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    #[serde(default)]
    pub global: GlobalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rope: Option<RopeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSection>,
    #[serde(default)]
    pub vae_loss: VaeLossSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curriculum: Option<CurriculumPlan>,
    #[serde(default)]
    pub curation: CurationConfig,
    #[serde(default)]
    pub wavelet: WaveletSection,
}

const LOG_LEVELS: [&str; 6] = ["off", "error", "warn", "info", "debug", "trace"];

impl ToolConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ToolConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Re-checks every section's invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        if !LOG_LEVELS.contains(&self.global.log_level.as_str()) {
            return Err(CliError::Config(format!(
                "global.log_level must be one of {}, got {:?}",
                LOG_LEVELS.join(", "),
                self.global.log_level
            )));
        }
        if let Some(r) = &self.rope {
            r.resolve()?;
        }
        if let Some(o) = &self.objective {
            o.resolve()?;
        }
        let v = &self.vae_loss;
        VaeLossWeights::new(v.wavelet, v.perceptual, v.l2)
            .map_err(|e| CliError::Config(format!("vae_loss: {e}")))?;
        if let Some(c) = &self.curriculum {
            c.validate()
                .map_err(|e| CliError::Config(format!("curriculum: {e}")))?;
        }
        self.curation
            .validate()
            .map_err(|e| CliError::Config(format!("curation: {e}")))?;
        let w = &self.wavelet;
        if w.bins == 0 {
            return Err(CliError::Config("wavelet.bins must be positive".into()));
        }
        if let Some(t) = w.tail_thresholds.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(CliError::Config(format!(
                "wavelet.tail_thresholds must be finite and non-negative, got {t}"
            )));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ToolConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ToolConfig::from_toml(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reference configuration printed by `--emit-default-config`. Sections whose
/// keys have no default are shown commented out.
pub const DEFAULT_CONFIG: &str = r#"# native4k reference configuration.
# Every value shown uncommented is the built-in default.

[global]
workers = 0                 # curation threads; 0 = one per core
seed = 0                    # RNG seed for randomized checks
output_dir = "out"          # every subcommand writes only below this directory
log_level = "info"          # off | error | warn | info | debug | trace

# Rotary spectra. channels, ramp_low and ramp_high have no default.
# [rope]
# channels = 64             # per-axis rotary channel count (even)
# base = 10000.0            # rotary base
# ntk_factor = 1.0          # NTK base multiplier
# train_h = 64              # training window, patches
# train_w = 64
# infer_h = 64              # inference length, patches (defaults to train_*)
# infer_w = 64
# ramp_low = 1.0            # cycle count below which bands are fully interpolated
# ramp_high = 32.0          # cycle count above which bands are left unscaled; must exceed ramp_low

# Wavelet flow-matching loss. gamma_s, beta_w and alpha_c have no default.
# [objective]
# gamma_s = 5.0             # SNR clip
# beta_w = 1.0              # exponent on the clipped SNR in the timestep weight
# alpha_c = 0.5             # exponent of the Huber threshold schedule, in [0, 1]
# c_min = 0.2               # Huber threshold at high noise
# c_max = 1.0               # Huber threshold at low noise

[vae_loss]
wavelet = 0.2               # high-frequency wavelet term weight
perceptual = 0.1            # perceptual term weight
l2 = 1.0                    # pixel L2 weight

# Two-stage curriculum; convention has no default.
# [[curriculum.stages]]
# name = "stage1"
# band = [0, 999]
# convention = "index_0_is_noise"     # or "index_0_is_clean"
# percentile = 100.0
# steps = 30000
# [[curriculum.stages]]
# name = "stage2"
# band = [0, 459]
# convention = "index_0_is_noise"
# percentile = 5.0
# steps = 2000

[curation]
min_pixels = 8294400        # 3840 x 2160 total pixels
flatness_patch = 240        # side of the non-overlapping patches
flatness_threshold = 800.0  # patches with Sobel-magnitude variance below this are flagged
flatness_max_ratio = 0.5    # reject when strictly more than this fraction is flagged
entropy_min_bits = 7.0      # reject when luma entropy is strictly below this
q_align_min = 4.0           # keep Q-Align scores strictly above this
artimuse_percentile = 30.0  # keep the top percent by ArtiMuse score
# buckets = [[5440, 3072], [4096, 4096]]   # replaces the built-in 15-bucket table

[curation.stages]
resolution = true
flatness = true
entropy = true
q_align = true
artimuse = true
dedup = true
character_merge = true
bucket = true

[wavelet]
tail_thresholds = [0.5, 1.0]  # |coefficient| tail cut-offs
bins = 64                     # histogram bins per subband
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_equals_defaults() {
        let cfg = ToolConfig::from_toml(DEFAULT_CONFIG).unwrap();
        assert_eq!(cfg, ToolConfig::default());
    }

    #[test]
    fn commented_sections_are_valid_when_uncommented() {
        let text: String = DEFAULT_CONFIG
            .lines()
            .map(|l| l.strip_prefix("# ").filter(|r| r.starts_with('[') || r.contains(" = ")).unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n");
        let cfg = ToolConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.rope.unwrap().channels, 64);
        assert_eq!(cfg.curriculum.unwrap().stages.len(), 2);
        assert_eq!(cfg.curation.buckets.unwrap().len(), 2);
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ToolConfig::from_toml("[objective]\ngamma_s = 5.0\nbeta_w = 1.0\nalpha_c = 0.5\n").unwrap();
        let o = cfg.objective.unwrap();
        assert_eq!((o.c_min, o.c_max), (0.2, 1.0));
        assert_eq!(cfg.curation, CurationConfig::default());
        assert_eq!(cfg.global, GlobalConfig::default());
    }

    #[test]
    fn missing_required_key_is_named() {
        let err = ToolConfig::from_toml("[objective]\nbeta_w = 1.0\nalpha_c = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("gamma_s"), "{err}");
    }

    #[test]
    fn inverted_ramp_is_rejected() {
        let err = ToolConfig::from_toml("[rope]\nchannels = 64\nramp_low = 1.25\nramp_high = 0.75\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ramp_low < ramp_high"), "{msg}");
        assert!(msg.contains("1.25") && msg.contains("0.75"), "{msg}");
    }

    #[test]
    fn unknown_key_has_location() {
        let err = ToolConfig::from_toml("[curation]\nmin_pixel = 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("min_pixel") && msg.contains("line 2"), "{msg}");
        let err = ToolConfig::from_toml("[colors]\n").unwrap_err();
        assert!(err.to_string().contains("colors"));
    }

    #[test]
    fn bad_log_level() {
        assert!(ToolConfig::from_toml("[global]\nlog_level = \"loud\"\n").is_err());
    }
}

//! Curation pipeline for native-4K multi-aspect image corpora.
//!
//! Records travel through a fixed sequence of stages:
//!
//! ```text
//! resolution → flatness → entropy → q_align → artimuse → dedup → character_merge → bucket
//! ```
//!
//! The first four are per-image and run in parallel; the rest are corpus-level
//! barrier steps. Every stage a record reaches appends one [`TraceEntry`] to its
//! `filter_trace`, so a record's trace always lists stages in pipeline order.
//!
//! Scores from external models (Q-Align, ArtiMuse) and the person-detection
//! `character` tag are ingested from the manifest; nothing here runs a model.

mod audit;
mod bucket;
mod filters;
mod manifest;
mod pipeline;

pub use audit::{audit_report, DEFAULT_AR_BIN_WIDTH, ArBin, AuditReport, BucketCount, Quantiles};
pub use bucket::{bucket_assign, DEFAULT_BUCKETS, log_ar_distance, Bucket, BucketSet, CropPlan, CropRect, Orientation};
pub use filters::{
    entropy_bits, entropy_filter, flatness_filter, load_luma, patch_flatness_scores,
    resolution_gate, sobel_magnitudes, FlatnessResult, LumaImage,
};
pub use manifest::{read_manifest, write_manifest, ManifestLine};
pub use pipeline::{
    dedup, run_pipeline, score_filters, write_outputs, DedupResult, PipelineOutput,
    PipelineReport, Quarantined, ScoreOutcome, StageCount,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: String, message: String },
    #[error("record {0} has no dimensions and no image to read them from")]
    MissingDims(String),
    #[error("record {0} has no content hash and no image to hash")]
    MissingHash(String),
    #[error("record {0} needs an image path to compute {1}")]
    MissingImage(String, &'static str),
    #[error("bucket set is empty")]
    EmptyBucketSet,
    #[error("invalid bucket {0}x{1}: dimensions must be positive and even")]
    InvalidBucket(u32, u32),
    #[error("image dimensions must be positive, got {0}x{1}")]
    InvalidDims(u32, u32),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("invalid curation config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CurationError>;

/// Pipeline stages in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Resolution,
    Flatness,
    Entropy,
    QAlign,
    Artimuse,
    Dedup,
    CharacterMerge,
    Bucket,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Resolution,
        Stage::Flatness,
        Stage::Entropy,
        Stage::QAlign,
        Stage::Artimuse,
        Stage::Dedup,
        Stage::CharacterMerge,
        Stage::Bucket,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Resolution => "resolution",
            Stage::Flatness => "flatness",
            Stage::Entropy => "entropy",
            Stage::QAlign => "q_align",
            Stage::Artimuse => "artimuse",
            Stage::Dedup => "dedup",
            Stage::CharacterMerge => "character_merge",
            Stage::Bucket => "bucket",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    /// Required external score missing; the record waits for re-scoring.
    Pending,
    /// Stage disabled in the configuration.
    Skipped,
    /// The stage could not be evaluated; the record is quarantined.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: Stage,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// One manifest row. Fields not listed here are kept in `extra` and written
/// back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetaRecord {
    pub id: String,
    /// Image file, relative to the manifest's directory unless absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_align: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artimuse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatness_flag_ratio: Option<f64>,
    /// Mean per-patch Sobel score, for ranking images by detail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatness_mean_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_bits: Option<f64>,
    #[serde(default)]
    pub character: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_en: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_zh: Option<String>,
    /// Hex SHA-256 of the image bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    #[serde(default)]
    pub filter_trace: Vec<TraceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<CropPlan>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl ImageMetaRecord {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            path: None,
            width: None,
            height: None,
            q_align: None,
            artimuse: None,
            flatness_flag_ratio: None,
            flatness_mean_score: None,
            entropy_bits: None,
            character: false,
            caption_en: None,
            caption_zh: None,
            content_hash: None,
            filter_trace: Vec::new(),
            bucket: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_dims(mut self, width: u32, height: u32) -> Self {
        self.width = Some(width);
        self.height = Some(height);
        self
    }

    pub fn dims(&self) -> Option<(u32, u32)> {
        Some((self.width?, self.height?))
    }

    pub fn trace(&mut self, stage: Stage, outcome: Outcome, value: Option<f64>, detail: Option<String>) {
        self.filter_trace.push(TraceEntry {
            stage,
            outcome,
            value,
            detail,
        });
    }

    pub fn last_outcome(&self) -> Option<Outcome> {
        self.filter_trace.last().map(|t| t.outcome)
    }
}

/// Which stages run. Disabled stages pass every record and trace `skipped`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub resolution: bool,
    pub flatness: bool,
    pub entropy: bool,
    pub q_align: bool,
    pub artimuse: bool,
    pub dedup: bool,
    pub character_merge: bool,
    pub bucket: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            resolution: true,
            flatness: true,
            entropy: true,
            q_align: true,
            artimuse: true,
            dedup: true,
            character_merge: true,
            bucket: true,
        }
    }
}

impl StageToggles {
    pub fn enabled(&self, stage: Stage) -> bool {
        match stage {
            Stage::Resolution => self.resolution,
            Stage::Flatness => self.flatness,
            Stage::Entropy => self.entropy,
            Stage::QAlign => self.q_align,
            Stage::Artimuse => self.artimuse,
            Stage::Dedup => self.dedup,
            Stage::CharacterMerge => self.character_merge,
            Stage::Bucket => self.bucket,
        }
    }

    pub fn set(&mut self, stage: Stage, on: bool) {
        let slot = match stage {
            Stage::Resolution => &mut self.resolution,
            Stage::Flatness => &mut self.flatness,
            Stage::Entropy => &mut self.entropy,
            Stage::QAlign => &mut self.q_align,
            Stage::Artimuse => &mut self.artimuse,
            Stage::Dedup => &mut self.dedup,
            Stage::CharacterMerge => &mut self.character_merge,
            Stage::Bucket => &mut self.bucket,
        };
        *slot = on;
    }
}

/// Thresholds for every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    /// Minimum `width·height`; 3840·2160.
    pub min_pixels: u64,
    /// Side of the square, non-overlapping flatness patches.
    pub flatness_patch: u32,
    /// Patches with Sobel-magnitude variance below this are flagged.
    pub flatness_threshold: f64,
    /// Images with a flagged fraction strictly above this are rejected.
    pub flatness_max_ratio: f64,
    /// Images with luma entropy strictly below this (bits) are rejected.
    pub entropy_min_bits: f64,
    /// Q-Align scores must be strictly greater than this.
    pub q_align_min: f64,
    /// Percentage of top ArtiMuse-ranked records kept.
    pub artimuse_percentile: f64,
    /// Target resolutions; the built-in table when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<[u32; 2]>>,
    pub stages: StageToggles,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            min_pixels: 3840 * 2160,
            flatness_patch: 240,
            flatness_threshold: 800.0,
            flatness_max_ratio: 0.5,
            entropy_min_bits: 7.0,
            q_align_min: 4.0,
            artimuse_percentile: 30.0,
            buckets: None,
            stages: StageToggles::default(),
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.flatness_patch < 3 {
            return Err(CurationError::Config(format!(
                "flatness_patch must be >= 3, got {}",
                self.flatness_patch
            )));
        }
        if !(0.0..=1.0).contains(&self.flatness_max_ratio) {
            return Err(CurationError::Config(format!(
                "flatness_max_ratio must be in [0, 1], got {}",
                self.flatness_max_ratio
            )));
        }
        crate::ranking::validate_percentile(self.artimuse_percentile)
            .map_err(|e| CurationError::Config(format!("artimuse_percentile: {e}")))?;
        self.bucket_set()?;
        Ok(())
    }

    pub fn bucket_set(&self) -> Result<BucketSet> {
        match &self.buckets {
            None => Ok(BucketSet::default_table()),
            Some(list) => BucketSet::from_dims(list.iter().map(|&[w, h]| (w, h))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_survive_a_round_trip() {
        let line = r#"{"id":"a","width":10,"height":20,"source":"laion","tags":["x"]}"#;
        let r: ImageMetaRecord = serde_json::from_str(line).unwrap();
        assert_eq!(r.extra["source"], "laion");
        let back = serde_json::to_string(&r).unwrap();
        let again: ImageMetaRecord = serde_json::from_str(&back).unwrap();
        assert_eq!(again, r);
        assert!(back.contains("\"tags\":[\"x\"]"));
    }

    #[test]
    fn stage_names_match_serde() {
        for s in Stage::ALL {
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!(Stage::ALL.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn default_config_is_valid() {
        CurationConfig::default().validate().unwrap();
        let bad = CurationConfig {
            artimuse_percentile: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

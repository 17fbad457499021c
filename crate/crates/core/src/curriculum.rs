//! Stage-wise aesthetic curriculum: each stage pairs a band of scheduler
//! timesteps with a top-percentile aesthetic filter over the corpus.
//!
//! Plans are declared in TOML:
//!
//! ```toml
//! [[stages]]
//! name = "full"
//! band = [0, 999]
//! convention = "index_0_is_noise"
//! percentile = 100.0
//! steps = 30000
//!
//! [[stages]]
//! name = "aesthetic"
//! band = [0, 459]
//! convention = "index_0_is_noise"
//! percentile = 5.0
//! steps = 2000
//! ```
//!
//! `convention` is mandatory: whether index 0 is the clean or the noise end
//! of the schedule decides what a band like `0..=459` means in continuous time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::ImageMetaRecord;
use crate::ranking::{self, RankError};

/// Number of discrete scheduler timesteps, indices `0..=999`.
pub const NUM_TIMESTEPS: u32 = 1000;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("timestep band [{start}, {end}] must satisfy start <= end <= {max}")]
    InvalidBand { start: u32, end: u32, max: u32 },
    #[error("timestep {0} outside [0, 999]")]
    TimestepOutOfRange(u32),
    #[error("stage {stage}: {source}")]
    Rank {
        stage: String,
        #[source]
        source: RankError,
    },
    #[error("stage {0}: step budget must be positive")]
    ZeroSteps(String),
    #[error("curriculum plan has no stages")]
    NoStages,
    #[error("invalid curriculum plan: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CurriculumError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimestepConvention {
    /// Index 0 is the clean end (`t → 0`).
    #[serde(rename = "index_0_is_clean")]
    IndexZeroIsClean,
    /// Index 0 is the noise end (`t → 1`).
    #[serde(rename = "index_0_is_noise")]
    IndexZeroIsNoise,
}

/// Inclusive range of scheduler indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct TimestepBand {
    start: u32,
    end: u32,
}

impl TimestepBand {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if start > end || end >= NUM_TIMESTEPS {
            return Err(CurriculumError::InvalidBand {
                start,
                end,
                max: NUM_TIMESTEPS - 1,
            });
        }
        Ok(Self { start, end })
    }

    pub fn full() -> Self {
        Self {
            start: 0,
            end: NUM_TIMESTEPS - 1,
        }
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn end(&self) -> u32 {
        self.end
    }

    pub fn contains(&self, timestep: u32) -> bool {
        (self.start..=self.end).contains(&timestep)
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl TryFrom<[u32; 2]> for TimestepBand {
    type Error = CurriculumError;

    fn try_from(v: [u32; 2]) -> Result<Self> {
        Self::new(v[0], v[1])
    }
}

impl From<TimestepBand> for [u32; 2] {
    fn from(b: TimestepBand) -> Self {
        [b.start, b.end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    pub band: TimestepBand,
    pub convention: TimestepConvention,
    /// Percentage of top-ranked records (by aesthetic score) the stage trains on.
    pub percentile: f64,
}

impl StageSpec {
    pub fn validate(&self) -> Result<()> {
        ranking::validate_percentile(self.percentile).map_err(|source| CurriculumError::Rank {
            stage: self.name.clone(),
            source,
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PlannedStageRow")]
pub struct PlannedStage {
    #[serde(flatten)]
    pub stage: StageSpec,
    pub steps: u64,
}

// serde ignores `deny_unknown_fields` on flattened structs, so rows are read
// through a flat mirror.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlannedStageRow {
    name: String,
    band: TimestepBand,
    convention: TimestepConvention,
    percentile: f64,
    steps: u64,
}

impl From<PlannedStageRow> for PlannedStage {
    fn from(r: PlannedStageRow) -> Self {
        Self {
            stage: StageSpec {
                name: r.name,
                band: r.band,
                convention: r.convention,
                percentile: r.percentile,
            },
            steps: r.steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumPlan {
    pub stages: Vec<PlannedStage>,
}

impl CurriculumPlan {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(CurriculumError::NoStages);
        }
        for s in &self.stages {
            s.stage.validate()?;
            if s.steps == 0 {
                return Err(CurriculumError::ZeroSteps(s.stage.name.clone()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| CurriculumError::Parse(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Two-stage schedule: full corpus over every timestep, then the top 5%
    /// by aesthetic score over indices `0..=459`.
    pub fn two_stage(convention: TimestepConvention) -> Self {
        Self {
            stages: vec![
                PlannedStage {
                    stage: StageSpec {
                        name: "stage1".into(),
                        band: TimestepBand::full(),
                        convention,
                        percentile: 100.0,
                    },
                    steps: 30_000,
                },
                PlannedStage {
                    stage: StageSpec {
                        name: "stage2".into(),
                        band: TimestepBand { start: 0, end: 459 },
                        convention,
                        percentile: 5.0,
                    },
                    steps: 2_000,
                },
            ],
        }
    }
}

/// Keeps the top `stage.percentile` percent of records by ArtiMuse score,
/// ties broken by id ascending. Output is in rank order.
pub fn filter_records<'a>(
    records: &'a [ImageMetaRecord],
    stage: &StageSpec,
) -> Result<Vec<&'a ImageMetaRecord>> {
    let kept = ranking::top_percentile(records, stage.percentile, |r| r.artimuse, |r| &r.id)
        .map_err(|source| CurriculumError::Rank {
            stage: stage.name.clone(),
            source,
        })?;
    Ok(kept.into_iter().map(|i| &records[i]).collect())
}

/// Uniform sampler over a stage's band. Owns its RNG; give each loader worker
/// its own instance with a distinct seed.
#[derive(Debug, Clone)]
pub struct TimestepSampler {
    band: TimestepBand,
    rng: ChaCha8Rng,
}

impl TimestepSampler {
    pub fn new(band: TimestepBand, seed: u64) -> Self {
        Self {
            band,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn band(&self) -> TimestepBand {
        self.band
    }

    pub fn sample(&mut self) -> u32 {
        self.rng.gen_range(self.band.start..=self.band.end)
    }
}

/// Maps a scheduler index to continuous flow time `t ∈ (0, 1)`, where `t = 1`
/// is pure noise.
pub fn normalized_t(timestep: u32, convention: TimestepConvention) -> Result<f64> {
    if timestep >= NUM_TIMESTEPS {
        return Err(CurriculumError::TimestepOutOfRange(timestep));
    }
    let u = (f64::from(timestep) + 0.5) / f64::from(NUM_TIMESTEPS);
    Ok(match convention {
        TimestepConvention::IndexZeroIsClean => u,
        TimestepConvention::IndexZeroIsNoise => 1.0 - u,
    })
}

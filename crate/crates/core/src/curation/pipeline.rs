//! Stage orchestration, quarantine routing and the retention report.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    bucket_assign, entropy_filter, flatness_filter, write_manifest, CurationConfig, CurationError,
    ImageMetaRecord, LumaImage, ManifestLine, Outcome, Result, Stage,
};
use crate::ranking::top_percentile;

/// A row that could not be evaluated, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub reason: String,
    /// Original text for rows that did not parse.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<ImageMetaRecord>,
}

/// Per-record results of the Q-Align threshold and the ArtiMuse rank filter.
/// `artimuse` is `None` for records that did not reach the rank filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOutcome {
    pub q_align: Outcome,
    pub artimuse: Option<Outcome>,
}

/// Applies both score filters to a batch. Missing scores give `Pending`,
/// non-finite scores give `Error`. The rank filter runs over the records
/// that passed Q-Align and carry a finite ArtiMuse score.
pub fn score_filters(records: &[ImageMetaRecord], cfg: &CurationConfig) -> Vec<ScoreOutcome> {
    let mut out: Vec<ScoreOutcome> = records
        .iter()
        .map(|r| ScoreOutcome {
            q_align: if !cfg.stages.q_align {
                Outcome::Skipped
            } else {
                match r.q_align {
                    None => Outcome::Pending,
                    Some(s) if !s.is_finite() => Outcome::Error,
                    Some(s) if s > cfg.q_align_min => Outcome::Pass,
                    Some(_) => Outcome::Fail,
                }
            },
            artimuse: None,
        })
        .collect();

    let mut ranked = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if !matches!(out[i].q_align, Outcome::Pass | Outcome::Skipped) {
            continue;
        }
        out[i].artimuse = Some(if !cfg.stages.artimuse {
            Outcome::Skipped
        } else {
            match r.artimuse {
                None => Outcome::Pending,
                Some(s) if !s.is_finite() => Outcome::Error,
                Some(_) => {
                    ranked.push(i);
                    Outcome::Fail
                }
            }
        });
    }
    if !ranked.is_empty() {
        let items: Vec<&ImageMetaRecord> = ranked.iter().map(|&i| &records[i]).collect();
        let kept = top_percentile(
            &items,
            cfg.artimuse_percentile,
            |r| r.artimuse,
            |r| r.id.as_str(),
        )
        .expect("percentile validated and scores finite");
        for k in kept {
            out[ranked[k]].artimuse = Some(Outcome::Pass);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupResult {
    /// Survivors, sorted by id.
    pub kept: Vec<ImageMetaRecord>,
    /// Removed records with the id of the survivor they duplicate.
    pub removed: Vec<(ImageMetaRecord, String)>,
    /// Ids of every hash group with more than one member; survivor first.
    pub groups: Vec<Vec<String>>,
}

/// Drops exact content duplicates, keeping the lowest id of each hash group.
pub fn dedup(mut records: Vec<ImageMetaRecord>) -> Result<DedupResult> {
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let mut by_hash: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let h = r
            .content_hash
            .as_ref()
            .ok_or_else(|| CurationError::MissingHash(r.id.clone()))?;
        by_hash.entry(h.to_ascii_lowercase()).or_default().push(i);
    }
    let mut keeper_of = vec![None; records.len()];
    let mut groups = Vec::new();
    for members in by_hash.values().filter(|m| m.len() > 1) {
        let keeper = records[members[0]].id.clone();
        for &m in &members[1..] {
            keeper_of[m] = Some(keeper.clone());
        }
        groups.push(members.iter().map(|&m| records[m].id.clone()).collect());
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (r, k) in records.into_iter().zip(keeper_of) {
        match k {
            Some(k) => removed.push((r, k)),
            None => kept.push(r),
        }
    }
    Ok(DedupResult {
        kept,
        removed,
        groups,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: Option<Stage>,
    pub enabled: bool,
    pub entered: usize,
    pub passed: usize,
    pub failed: usize,
    pub pending: usize,
    pub skipped: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub input_lines: usize,
    pub malformed_lines: usize,
    pub duplicate_ids: usize,
    pub records: usize,
    pub stages: Vec<StageCount>,
    pub curated: usize,
    pub rejected: usize,
    pub pending: usize,
    pub quarantined: usize,
    pub duplicates_removed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub curated: Vec<ImageMetaRecord>,
    pub rejected: Vec<ImageMetaRecord>,
    /// Waiting for an external score.
    pub pending: Vec<ImageMetaRecord>,
    pub quarantined: Vec<Quarantined>,
    pub report: PipelineReport,
}

impl PipelineOutput {
    /// 0 when every row was evaluated, 2 when some were quarantined.
    pub fn exit_code(&self) -> i32 {
        if self.quarantined.is_empty() {
            0
        } else {
            2
        }
    }
}

enum Routed {
    Survivor(ImageMetaRecord),
    Rejected(ImageMetaRecord),
    Quarantined(Quarantined),
}

fn quarantine(mut record: ImageMetaRecord, line: usize, stage: Stage, reason: String) -> Routed {
    record.trace(stage, Outcome::Error, None, Some(reason.clone()));
    Routed::Quarantined(Quarantined {
        line: Some(line),
        id: Some(record.id.clone()),
        stage: Some(stage),
        reason,
        raw: None,
        record: Some(record),
    })
}

fn io_err(path: &Path, source: std::io::Error) -> CurationError {
    CurationError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Lazily read file bytes and decoded luma, shared by all per-image stages.
struct Source {
    path: Option<PathBuf>,
    bytes: Option<Vec<u8>>,
    luma: Option<LumaImage>,
}

impl Source {
    fn new(record: &ImageMetaRecord, base_dir: &Path) -> Self {
        Self {
            path: record.path.as_ref().map(|p| base_dir.join(p)),
            bytes: None,
            luma: None,
        }
    }

    fn bytes(&mut self) -> Result<Option<&[u8]>> {
        let Some(path) = &self.path else {
            return Ok(None);
        };
        if self.bytes.is_none() {
            self.bytes = Some(fs::read(path).map_err(|e| io_err(path, e))?);
        }
        Ok(self.bytes.as_deref())
    }

    fn luma(&mut self) -> Result<Option<&LumaImage>> {
        if self.luma.is_none() {
            let Some(bytes) = self.bytes()? else {
                return Ok(None);
            };
            let img = image::load_from_memory(bytes).map_err(|e| CurationError::Decode {
                path: self.path.as_ref().expect("bytes imply path").display().to_string(),
                message: e.to_string(),
            })?;
            self.luma = Some(LumaImage::from_dynamic(&img));
        }
        Ok(self.luma.as_ref())
    }

    fn dims(&mut self) -> Result<Option<(u32, u32)>> {
        if let Some(l) = &self.luma {
            return Ok(Some((l.width as u32, l.height as u32)));
        }
        let Some(path) = &self.path else {
            return Ok(None);
        };
        let dims = image::image_dimensions(path).map_err(|e| CurationError::Decode {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Some(dims))
    }
}

/// Resolution, flatness, entropy and hashing for one record.
fn per_image(mut record: ImageMetaRecord, line: usize, base_dir: &Path, cfg: &CurationConfig) -> Routed {
    let mut src = Source::new(&record, base_dir);
    let toggles = cfg.stages;

    if record.dims().is_none() {
        match src.dims() {
            Ok(Some((w, h))) => {
                record.width = Some(w);
                record.height = Some(h);
            }
            Ok(None) if !toggles.resolution => {}
            Ok(None) => {
                let reason = CurationError::MissingDims(record.id.clone()).to_string();
                return quarantine(record, line, Stage::Resolution, reason);
            }
            Err(e) => return quarantine(record, line, Stage::Resolution, e.to_string()),
        }
    }
    if let Some((w, h)) = record.dims() {
        if w == 0 || h == 0 {
            let reason = CurationError::InvalidDims(w, h).to_string();
            return quarantine(record, line, Stage::Resolution, reason);
        }
    }

    if toggles.resolution {
        let (w, h) = record.dims().expect("checked above");
        let pixels = u64::from(w) * u64::from(h);
        let pass = pixels >= cfg.min_pixels;
        record.trace(
            Stage::Resolution,
            if pass { Outcome::Pass } else { Outcome::Fail },
            Some(pixels as f64),
            None,
        );
        if !pass {
            return Routed::Rejected(record);
        }
    } else {
        record.trace(Stage::Resolution, Outcome::Skipped, None, None);
    }

    if toggles.flatness {
        let (ratio, detail) = match src.luma() {
            Ok(Some(img)) => {
                let r = flatness_filter(img, cfg);
                record.flatness_flag_ratio = Some(r.ratio);
                record.flatness_mean_score = Some(r.mean_score);
                (r.ratio, Some(format!("{} of {} patches flagged", r.flagged, r.patches)))
            }
            Ok(None) => match record.flatness_flag_ratio {
                Some(r) if r.is_finite() => (r, Some("ingested".to_string())),
                _ => {
                    let reason =
                        CurationError::MissingImage(record.id.clone(), "flatness").to_string();
                    return quarantine(record, line, Stage::Flatness, reason);
                }
            },
            Err(e) => return quarantine(record, line, Stage::Flatness, e.to_string()),
        };
        let pass = ratio <= cfg.flatness_max_ratio;
        record.trace(
            Stage::Flatness,
            if pass { Outcome::Pass } else { Outcome::Fail },
            Some(ratio),
            detail,
        );
        if !pass {
            return Routed::Rejected(record);
        }
    } else {
        record.trace(Stage::Flatness, Outcome::Skipped, None, None);
    }

    if toggles.entropy {
        let (bits, detail) = match src.luma() {
            Ok(Some(img)) => {
                let (h, _) = entropy_filter(img, cfg.entropy_min_bits);
                record.entropy_bits = Some(h);
                (h, None)
            }
            Ok(None) => match record.entropy_bits {
                Some(h) if h.is_finite() => (h, Some("ingested".to_string())),
                _ => {
                    let reason =
                        CurationError::MissingImage(record.id.clone(), "entropy").to_string();
                    return quarantine(record, line, Stage::Entropy, reason);
                }
            },
            Err(e) => return quarantine(record, line, Stage::Entropy, e.to_string()),
        };
        let pass = bits >= cfg.entropy_min_bits;
        record.trace(
            Stage::Entropy,
            if pass { Outcome::Pass } else { Outcome::Fail },
            Some(bits),
            detail,
        );
        if !pass {
            return Routed::Rejected(record);
        }
    } else {
        record.trace(Stage::Entropy, Outcome::Skipped, None, None);
    }

    if let Some(luma) = &src.luma {
        let actual = (luma.width as u32, luma.height as u32);
        if record.dims() != Some(actual) {
            let reason = format!(
                "declared size {}x{} does not match image {}x{}",
                record.width.unwrap_or(0),
                record.height.unwrap_or(0),
                actual.0,
                actual.1
            );
            return quarantine(record, line, Stage::Entropy, reason);
        }
    }

    if toggles.dedup && record.content_hash.is_none() {
        match src.bytes() {
            Ok(Some(bytes)) => record.content_hash = Some(hex::encode(Sha256::digest(bytes))),
            Ok(None) => {
                let reason = CurationError::MissingHash(record.id.clone()).to_string();
                return quarantine(record, line, Stage::Dedup, reason);
            }
            Err(e) => return quarantine(record, line, Stage::Dedup, e.to_string()),
        }
    }
    Routed::Survivor(record)
}

fn stage_counts(all: &[&ImageMetaRecord], cfg: &CurationConfig) -> Vec<StageCount> {
    Stage::ALL
        .iter()
        .map(|&stage| {
            let mut c = StageCount {
                stage: Some(stage),
                enabled: cfg.stages.enabled(stage),
                ..Default::default()
            };
            for entry in all.iter().flat_map(|r| &r.filter_trace).filter(|e| e.stage == stage) {
                c.entered += 1;
                match entry.outcome {
                    Outcome::Pass => c.passed += 1,
                    Outcome::Fail => c.failed += 1,
                    Outcome::Pending => c.pending += 1,
                    Outcome::Skipped => c.skipped += 1,
                    Outcome::Error => c.errors += 1,
                }
            }
            c
        })
        .collect()
}

/// Runs every stage over a parsed manifest.
///
/// Paths are resolved against `base_dir`. Existing traces are discarded so a
/// re-run starts from a clean trace. `workers == 0` uses one thread per core.
/// Outputs are sorted by id so results do not depend on scheduling.
pub fn run_pipeline(
    lines: Vec<ManifestLine>,
    base_dir: &Path,
    cfg: &CurationConfig,
    workers: usize,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let buckets = cfg.bucket_set()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CurationError::Config(format!("worker pool: {e}")))?;

    let mut report = PipelineReport {
        input_lines: lines.len(),
        ..Default::default()
    };
    let mut quarantined = Vec::new();
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for l in lines {
        match l {
            ManifestLine::Malformed { line, raw, message } => {
                report.malformed_lines += 1;
                warn!("manifest line {line}: {message}");
                quarantined.push(Quarantined {
                    line: Some(line),
                    id: None,
                    stage: None,
                    reason: message,
                    raw: Some(raw),
                    record: None,
                });
            }
            ManifestLine::Record { line, mut record } => {
                record.filter_trace.clear();
                record.bucket = None;
                if seen.insert(record.id.clone()) {
                    records.push((line, record));
                } else {
                    report.duplicate_ids += 1;
                    quarantined.push(Quarantined {
                        line: Some(line),
                        id: Some(record.id.clone()),
                        stage: None,
                        reason: format!("duplicate id {}", record.id),
                        raw: None,
                        record: Some(record),
                    });
                }
            }
        }
    }
    report.records = records.len();
    info!("curating {} records with {} workers", records.len(), pool.current_num_threads());

    let routed: Vec<(usize, Routed)> = pool.install(|| {
        records
            .into_par_iter()
            .map(|(line, r)| {
                debug!("evaluating {}", r.id);
                (line, per_image(r, line, base_dir, cfg))
            })
            .collect()
    });

    let mut rejected = Vec::new();
    let mut pending = Vec::new();
    let mut survivors = Vec::new();
    for (line, r) in routed {
        match r {
            Routed::Survivor(rec) => survivors.push((line, rec)),
            Routed::Rejected(rec) => rejected.push(rec),
            Routed::Quarantined(q) => quarantined.push(q),
        }
    }

    // Score filters: barrier over all per-image survivors.
    let recs: Vec<ImageMetaRecord> = survivors.iter().map(|(_, r)| r.clone()).collect();
    let outcomes = score_filters(&recs, cfg);
    let mut ranked = Vec::new();
    for ((line, mut rec), o) in survivors.into_iter().zip(outcomes) {
        rec.trace(Stage::QAlign, o.q_align, rec.q_align, None);
        match o.q_align {
            Outcome::Pass | Outcome::Skipped => {}
            Outcome::Fail => {
                rejected.push(rec);
                continue;
            }
            Outcome::Pending => {
                pending.push(rec);
                continue;
            }
            Outcome::Error => {
                let reason = format!("non-finite q_align score for {}", rec.id);
                rec.filter_trace.pop();
                if let Routed::Quarantined(q) = quarantine(rec, line, Stage::QAlign, reason) {
                    quarantined.push(q);
                }
                continue;
            }
        }
        let a = o.artimuse.expect("reached rank filter");
        rec.trace(Stage::Artimuse, a, rec.artimuse, None);
        match a {
            Outcome::Pass | Outcome::Skipped => ranked.push((line, rec)),
            Outcome::Fail => rejected.push(rec),
            Outcome::Pending => pending.push(rec),
            Outcome::Error => {
                let reason = format!("non-finite artimuse score for {}", rec.id);
                rec.filter_trace.pop();
                if let Routed::Quarantined(q) = quarantine(rec, line, Stage::Artimuse, reason) {
                    quarantined.push(q);
                }
            }
        }
    }

    let lines_by_id: BTreeMap<String, usize> =
        ranked.iter().map(|(l, r)| (r.id.clone(), *l)).collect();
    let ranked: Vec<ImageMetaRecord> = ranked.into_iter().map(|(_, r)| r).collect();

    // Dedup and character merge.
    let mut kept = if cfg.stages.dedup {
        let d = dedup(ranked)?;
        report.duplicates_removed = d.removed.len();
        let mut merged: BTreeMap<String, (bool, usize)> = BTreeMap::new();
        for (mut r, keeper) in d.removed {
            let e = merged.entry(keeper.clone()).or_default();
            e.0 |= r.character;
            e.1 += 1;
            r.trace(Stage::Dedup, Outcome::Fail, None, Some(format!("duplicate of {keeper}")));
            rejected.push(r);
        }
        let mut kept = d.kept;
        for r in &mut kept {
            r.trace(Stage::Dedup, Outcome::Pass, None, None);
            if cfg.stages.character_merge {
                let (flag, n) = merged.get(&r.id).copied().unwrap_or((false, 0));
                r.character |= flag;
                let detail = (n > 0).then(|| format!("merged over {} duplicates", n));
                let v = if r.character { 1.0 } else { 0.0 };
                r.trace(Stage::CharacterMerge, Outcome::Pass, Some(v), detail);
            } else {
                r.trace(Stage::CharacterMerge, Outcome::Skipped, None, None);
            }
        }
        kept
    } else {
        let mut kept = ranked;
        for r in &mut kept {
            r.trace(Stage::Dedup, Outcome::Skipped, None, None);
            if cfg.stages.character_merge {
                let v = if r.character { 1.0 } else { 0.0 };
                r.trace(Stage::CharacterMerge, Outcome::Pass, Some(v), None);
            } else {
                r.trace(Stage::CharacterMerge, Outcome::Skipped, None, None);
            }
        }
        kept
    };

    // Bucket assignment.
    let mut curated = Vec::with_capacity(kept.len());
    for mut r in kept.drain(..) {
        if !cfg.stages.bucket {
            r.trace(Stage::Bucket, Outcome::Skipped, None, None);
            curated.push(r);
            continue;
        }
        let line = lines_by_id.get(&r.id).copied().unwrap_or(0);
        let plan = match r.dims() {
            Some((w, h)) => bucket_assign(w, h, &buckets),
            None => Err(CurationError::MissingDims(r.id.clone())),
        };
        match plan {
            Ok(plan) => {
                r.trace(Stage::Bucket, Outcome::Pass, None, Some(plan.bucket.label()));
                r.bucket = Some(plan);
                curated.push(r);
            }
            Err(e) => {
                if let Routed::Quarantined(q) = quarantine(r, line, Stage::Bucket, e.to_string()) {
                    quarantined.push(q);
                }
            }
        }
    }

    curated.sort_by(|a, b| a.id.cmp(&b.id));
    rejected.sort_by(|a, b| a.id.cmp(&b.id));
    pending.sort_by(|a, b| a.id.cmp(&b.id));
    quarantined.sort_by(|a, b| a.line.cmp(&b.line).then_with(|| a.id.cmp(&b.id)));

    let all: Vec<&ImageMetaRecord> = curated
        .iter()
        .chain(&rejected)
        .chain(&pending)
        .chain(quarantined.iter().filter_map(|q| q.record.as_ref()))
        .collect();
    report.stages = stage_counts(&all, cfg);
    report.curated = curated.len();
    report.rejected = rejected.len();
    report.pending = pending.len();
    report.quarantined = quarantined.len();
    info!(
        "curated {} / rejected {} / pending {} / quarantined {}",
        report.curated, report.rejected, report.pending, report.quarantined
    );

    Ok(PipelineOutput {
        curated,
        rejected,
        pending,
        quarantined,
        report,
    })
}

/// Writes `curated.jsonl`, `rejected.jsonl`, `pending.jsonl` and
/// `report.json` to `out_dir`, and `quarantined.jsonl` to `quarantine_dir`.
pub fn write_outputs(output: &PipelineOutput, out_dir: &Path, quarantine_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    fs::create_dir_all(quarantine_dir).map_err(|e| io_err(quarantine_dir, e))?;
    let create = |p: PathBuf| -> Result<(BufWriter<fs::File>, PathBuf)> {
        let f = fs::File::create(&p).map_err(|e| io_err(&p, e))?;
        Ok((BufWriter::new(f), p))
    };
    for (name, records) in [
        ("curated.jsonl", &output.curated),
        ("rejected.jsonl", &output.rejected),
        ("pending.jsonl", &output.pending),
    ] {
        let (w, p) = create(out_dir.join(name))?;
        write_manifest(w, records.iter()).map_err(|e| io_err(&p, e))?;
    }
    let (mut w, p) = create(quarantine_dir.join("quarantined.jsonl"))?;
    for q in &output.quarantined {
        serde_json::to_writer(&mut w, q).map_err(|e| io_err(&p, e.into()))?;
        std::io::Write::write_all(&mut w, b"\n").map_err(|e| io_err(&p, e))?;
    }
    std::io::Write::flush(&mut w).map_err(|e| io_err(&p, e))?;
    let (mut w, p) = create(out_dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut w, &output.report).map_err(|e| io_err(&p, e.into()))?;
    std::io::Write::write_all(&mut w, b"\n").map_err(|e| io_err(&p, e))?;
    std::io::Write::flush(&mut w).map_err(|e| io_err(&p, e))
}

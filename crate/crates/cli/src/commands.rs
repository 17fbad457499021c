//! Subcommand implementations. Each returns the process exit code.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Read};
use std::path::{Component, Path, PathBuf};

use clap::Args;
use log::{info, warn};
use native4k::curation::{
    audit_report, bucket_assign, read_manifest, run_pipeline, write_outputs, ImageMetaRecord,
    LumaImage, ManifestLine, Stage, DEFAULT_AR_BIN_WIDTH,
};
use native4k::curriculum::{filter_records, normalized_t, CurriculumPlan, TimestepSampler};
use native4k::objective::gradcheck::check_loss_gradient;
use native4k::objective::{loss_curve, midpoint_grid, FlowSample, ObjectiveConfig, DEFAULT_GRID_POINTS};
use native4k::rope::{
    band_table, cosine_pattern_2d, phase_closure_report, phase_drift_map, AxisSpectra,
};
use native4k::wavelet::{dwt_forward, read_latent, subband_stats_many, LatentTensor, LATENT_MAGIC};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ObjectiveSection, RopeSection};
use crate::{CliError, Context, ObjectiveArgs};

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_output(ctx: &Context, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(&ctx.output_dir).map_err(io_err(&ctx.output_dir))?;
    let path = ctx.output_dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("plain data serializes");
    v.push(b'\n');
    v
}

fn load_manifest(path: &Path) -> Result<Vec<ManifestLine>> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_manifest(BufReader::new(f)).map_err(io_err(path))
}

/// Splits parsed lines into records and a count of malformed lines.
fn records_of(lines: Vec<ManifestLine>) -> (Vec<ImageMetaRecord>, usize) {
    let mut bad = 0;
    let mut out = Vec::new();
    for l in lines {
        match l {
            ManifestLine::Record { record, .. } => out.push(record),
            ManifestLine::Malformed { line, message, .. } => {
                warn!("manifest line {line}: {message}");
                bad += 1;
            }
        }
    }
    (out, bad)
}

fn parse_stage(s: &str) -> std::result::Result<Stage, String> {
    Stage::ALL
        .into_iter()
        .find(|st| st.name() == s)
        .ok_or_else(|| {
            let names: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
            format!("unknown stage {s:?}; expected one of {}", names.join(", "))
        })
}

fn parse_size(s: &str) -> std::result::Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    Ok((w, h))
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// Source manifest, one JSON record per line. Relative image paths are
    /// resolved against its directory.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Disable a stage (repeatable).
    #[arg(long, value_parser = parse_stage)]
    pub disable: Vec<Stage>,
    /// Enable a stage turned off in the config (repeatable).
    #[arg(long, value_parser = parse_stage)]
    pub enable: Vec<Stage>,
    #[arg(long)]
    pub min_pixels: Option<u64>,
    #[arg(long)]
    pub flatness_threshold: Option<f64>,
    #[arg(long)]
    pub flatness_max_ratio: Option<f64>,
    #[arg(long)]
    pub entropy_min_bits: Option<f64>,
    #[arg(long)]
    pub q_align_min: Option<f64>,
    #[arg(long)]
    pub artimuse_percentile: Option<f64>,
    /// Quarantine directory, relative to the output directory.
    #[arg(long, default_value = "quarantine")]
    pub quarantine_dir: PathBuf,
}

pub fn curate(ctx: &Context, a: &CurateArgs) -> Result<i32> {
    let mut cfg = ctx.config.curation.clone();
    for s in &a.enable {
        cfg.stages.set(*s, true);
    }
    for s in &a.disable {
        cfg.stages.set(*s, false);
    }
    if let Some(v) = a.min_pixels {
        cfg.min_pixels = v;
    }
    if let Some(v) = a.flatness_threshold {
        cfg.flatness_threshold = v;
    }
    if let Some(v) = a.flatness_max_ratio {
        cfg.flatness_max_ratio = v;
    }
    if let Some(v) = a.entropy_min_bits {
        cfg.entropy_min_bits = v;
    }
    if let Some(v) = a.q_align_min {
        cfg.q_align_min = v;
    }
    if let Some(v) = a.artimuse_percentile {
        cfg.artimuse_percentile = v;
    }
    cfg.validate()?;
    if a.quarantine_dir.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(CliError::Usage(format!(
            "--quarantine-dir must be a relative path inside the output directory, got {}",
            a.quarantine_dir.display()
        )));
    }

    let lines = load_manifest(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let out = run_pipeline(lines, base, &cfg, ctx.config.global.workers)?;
    write_outputs(&out, &ctx.output_dir, &ctx.output_dir.join(&a.quarantine_dir))?;
    let r = &out.report;
    println!(
        "curated {} rejected {} pending {} quarantined {} (duplicates removed {})",
        r.curated, r.rejected, r.pending, r.quarantined, r.duplicates_removed
    );
    for s in &r.stages {
        println!(
            "  {:<16} entered {:>6} pass {:>6} fail {:>6} pending {:>6} skipped {:>6} error {:>6}",
            s.stage.map(Stage::name).unwrap_or("-"),
            s.entered,
            s.passed,
            s.failed,
            s.pending,
            s.skipped,
            s.errors
        );
    }
    Ok(out.exit_code())
}

#[derive(Debug, Args)]
pub struct BucketArgs {
    /// Source size as WIDTHxHEIGHT (repeatable).
    #[arg(long = "size", value_parser = parse_size)]
    pub sizes: Vec<(u32, u32)>,
    /// Manifest whose records carry width and height.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn bucket(ctx: &Context, a: &BucketArgs) -> Result<i32> {
    if a.sizes.is_empty() && a.manifest.is_none() {
        return Err(CliError::Usage("bucket needs --size or --manifest".into()));
    }
    let set = ctx.config.curation.bucket_set()?;
    let mut rows: Vec<(String, u32, u32)> = a
        .sizes
        .iter()
        .map(|&(w, h)| (format!("{w}x{h}"), w, h))
        .collect();
    let mut skipped = 0;
    if let Some(m) = &a.manifest {
        let (records, bad) = records_of(load_manifest(m)?);
        skipped += bad;
        for r in records {
            match r.dims() {
                Some((w, h)) => rows.push((r.id, w, h)),
                None => {
                    warn!("record {} has no dimensions; skipped", r.id);
                    skipped += 1;
                }
            }
        }
    }
    let mut csv = String::from(
        "id,width,height,bucket_width,bucket_height,crop_x,crop_y,crop_width,crop_height\n",
    );
    for (id, w, h) in rows {
        let p = bucket_assign(w, h, &set)?;
        let _ = writeln!(
            csv,
            "{id},{w},{h},{},{},{},{},{},{}",
            p.bucket.width, p.bucket.height, p.crop.x, p.crop.y, p.crop.width, p.crop.height
        );
    }
    print!("{csv}");
    write_output(ctx, "buckets.csv", csv.as_bytes())?;
    Ok(if skipped > 0 { 2 } else { 0 })
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Width of the log aspect-ratio bins.
    #[arg(long, default_value_t = DEFAULT_AR_BIN_WIDTH)]
    pub bin_width: f64,
}

pub fn audit(ctx: &Context, a: &AuditArgs) -> Result<i32> {
    let (records, bad) = records_of(load_manifest(&a.manifest)?);
    let set = ctx.config.curation.bucket_set()?;
    let report = audit_report(&records, &set, a.bin_width)?;
    write_output(ctx, "audit.json", &to_json(&report))?;
    write_output(ctx, "audit_ar_histogram.csv", report.histogram_csv().as_bytes())?;
    write_output(ctx, "audit_buckets.csv", report.buckets_csv().as_bytes())?;
    println!(
        "{} records, {} AR bins, median {:.2} MP",
        report.records,
        report.ar_histogram.len(),
        report.megapixels.p50
    );
    Ok(if bad > 0 || report.missing_dims > 0 { 2 } else { 0 })
}

#[derive(Debug, Args)]
pub struct RopeArgs {
    /// Rotary channels per axis.
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long)]
    pub ntk_factor: Option<f64>,
    #[arg(long)]
    pub train_h: Option<u32>,
    #[arg(long)]
    pub train_w: Option<u32>,
    #[arg(long)]
    pub infer_h: Option<u32>,
    #[arg(long)]
    pub infer_w: Option<u32>,
    #[arg(long)]
    pub ramp_low: Option<f64>,
    #[arg(long)]
    pub ramp_high: Option<f64>,
    /// Last drift-map position; defaults to twice the training window.
    #[arg(long)]
    pub drift_end: Option<u32>,
    /// Also write a grayscale PNG of the 2D cosine pattern.
    #[arg(long)]
    pub pattern: bool,
    #[arg(long, default_value_t = 1)]
    pub pattern_band_h: usize,
    #[arg(long, default_value_t = 1)]
    pub pattern_band_w: usize,
}

fn missing(key: &str) -> CliError {
    CliError::Config(format!(
        "{key} is required: set it in the config or pass --{}",
        key.rsplit('.').next().unwrap_or(key).replace('_', "-")
    ))
}

fn rope_section(ctx: &Context, a: &RopeArgs) -> Result<RopeSection> {
    let mut s = match ctx.config.rope.clone() {
        Some(s) => s,
        None => RopeSection {
            channels: a.channels.ok_or_else(|| missing("rope.channels"))?,
            base: 10_000.0,
            ntk_factor: 1.0,
            train_h: native4k::rope::DEFAULT_TRAIN_WINDOW,
            train_w: native4k::rope::DEFAULT_TRAIN_WINDOW,
            infer_h: None,
            infer_w: None,
            ramp_low: a.ramp_low.ok_or_else(|| missing("rope.ramp_low"))?,
            ramp_high: a.ramp_high.ok_or_else(|| missing("rope.ramp_high"))?,
        },
    };
    s.channels = a.channels.unwrap_or(s.channels);
    s.base = a.base.unwrap_or(s.base);
    s.ntk_factor = a.ntk_factor.unwrap_or(s.ntk_factor);
    s.train_h = a.train_h.unwrap_or(s.train_h);
    s.train_w = a.train_w.unwrap_or(s.train_w);
    s.infer_h = a.infer_h.or(s.infer_h);
    s.infer_w = a.infer_w.or(s.infer_w);
    s.ramp_low = a.ramp_low.unwrap_or(s.ramp_low);
    s.ramp_high = a.ramp_high.unwrap_or(s.ramp_high);
    Ok(s)
}

fn band_csv(spectra: &AxisSpectra) -> String {
    let mut csv = String::from("k,omega,cycles,snapped,omega_resonant,gamma,omega_yarn\n");
    for r in band_table(spectra) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.k, r.omega, r.cycles, r.snapped, r.omega_resonant, r.gamma, r.omega_yarn
        );
    }
    csv
}

pub fn rope_diagnose(ctx: &Context, a: &RopeArgs) -> Result<i32> {
    let settings = rope_section(ctx, a)?.resolve()?;
    let axes = [
        AxisSpectra::build(settings.height, &settings.base, settings.ramp)?,
        AxisSpectra::build(settings.width, &settings.base, settings.ramp)?,
    ];
    for s in &axes {
        let name = s.spec.axis().name();
        let len = s.spec.train_len();
        write_output(ctx, &format!("rope_bands_{name}.csv"), band_csv(s).as_bytes())?;

        let end = a.drift_end.unwrap_or(2 * len);
        let positions: Vec<f64> = (0..=end).map(f64::from).collect();
        let drift = phase_drift_map(&s.baseline, &s.resonant, &positions)?;
        let mut csv = String::from("band");
        for p in &drift.positions {
            let _ = write!(csv, ",{p}");
        }
        csv.push('\n');
        for (k, row) in drift.rows.iter().enumerate() {
            let _ = write!(csv, "{k}");
            for v in row {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
        write_output(ctx, &format!("rope_drift_{name}.csv"), csv.as_bytes())?;

        let closure = phase_closure_report(&s.baseline, &s.resonant, len)?;
        let worst = |f: fn(&native4k::rope::ClosureRow) -> f64| {
            closure.iter().map(f).fold(0.0, f64::max)
        };
        println!(
            "{name}: {} bands, window {len}, scale {}, max closure error baseline {:.6} resonant {:.3e}",
            s.baseline.bands(),
            s.spec.scale(),
            worst(|r| r.baseline),
            worst(|r| r.resonant)
        );
    }
    if a.pattern {
        let [h, w] = &axes;
        let grid = cosine_pattern_2d(
            &h.resonant,
            a.pattern_band_h,
            &w.resonant,
            a.pattern_band_w,
            h.spec.infer_len() as usize,
            w.spec.infer_len() as usize,
        )?;
        let img = image::GrayImage::from_raw(grid.width as u32, grid.height as u32, grid.to_gray_bytes())
            .expect("buffer matches grid");
        let mut png = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| CliError::Usage(format!("PNG encoding failed: {e}")))?;
        write_output(ctx, "rope_pattern.png", &png)?;
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct WaveletArgs {
    /// Latent files (LTNT format), raster images, or directories of either.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Tail cut-off on |coefficient| (repeatable); replaces the configured list.
    #[arg(long = "tail-threshold")]
    pub tail_thresholds: Vec<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(io_err(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.is_file())
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

/// Raster images become a single luma channel scaled to [0, 1]; a trailing
/// odd row or column is dropped so the transform applies.
fn load_tensor(path: &Path) -> Result<LatentTensor> {
    let mut f = fs::File::open(path).map_err(io_err(path))?;
    let mut head = [0u8; 4];
    let n = f.read(&mut head).map_err(io_err(path))?;
    if n == 4 && head == LATENT_MAGIC {
        let f = fs::File::open(path).map_err(io_err(path))?;
        return Ok(read_latent(BufReader::new(f))?);
    }
    let luma = native4k::curation::load_luma(path)?;
    let (w, h) = (luma.width & !1, luma.height & !1);
    if w != luma.width || h != luma.height {
        warn!("{}: cropped to {w}x{h} for the transform", path.display());
    }
    Ok(luma_tensor(&luma, w, h)?)
}

fn luma_tensor(l: &LumaImage, w: usize, h: usize) -> native4k::wavelet::Result<LatentTensor> {
    LatentTensor::from_fn(1, h, w, |_, y, x| f64::from(l.pixels[y * l.width + x]) / 255.0)
}

pub fn wavelet_stats(ctx: &Context, a: &WaveletArgs) -> Result<i32> {
    let thresholds = if a.tail_thresholds.is_empty() {
        ctx.config.wavelet.tail_thresholds.clone()
    } else {
        a.tail_thresholds.clone()
    };
    let bins = a.bins.unwrap_or(ctx.config.wavelet.bins);
    if bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    let files = expand_inputs(&a.inputs)?;
    if files.is_empty() {
        return Err(CliError::Usage("no input files".into()));
    }
    let mut subbands = Vec::with_capacity(files.len());
    for f in &files {
        subbands.push(dwt_forward(&load_tensor(f)?)?);
    }
    let stats = subband_stats_many(&subbands, &thresholds, bins);
    #[derive(Serialize)]
    struct Out<'a> {
        files: Vec<String>,
        #[serde(flatten)]
        stats: &'a native4k::wavelet::SubbandStats,
    }
    let out = Out {
        files: files.iter().map(|f| f.display().to_string()).collect(),
        stats: &stats,
    };
    write_output(ctx, "wavelet_stats.json", &to_json(&out))?;
    write_output(ctx, "wavelet_histogram.csv", stats.histogram_csv().as_bytes())?;
    for b in &stats.bands {
        println!("{:<2} energy fraction {:.6}", b.band, b.energy_fraction);
    }
    Ok(0)
}

fn objective_config(ctx: &Context, a: &ObjectiveArgs) -> Result<ObjectiveConfig> {
    let base = ctx.config.objective;
    let pick = |flag: Option<f64>, cfg: Option<f64>, key: &str| {
        flag.or(cfg).ok_or_else(|| missing(&format!("objective.{key}")))
    };
    let s = ObjectiveSection {
        gamma_s: pick(a.gamma_s, base.map(|b| b.gamma_s), "gamma_s")?,
        beta_w: pick(a.beta_w, base.map(|b| b.beta_w), "beta_w")?,
        alpha_c: pick(a.alpha_c, base.map(|b| b.alpha_c), "alpha_c")?,
        c_min: a
            .c_min
            .or(base.map(|b| b.c_min))
            .unwrap_or(native4k::objective::HuberSchedule::DEFAULT_C_MIN),
        c_max: a
            .c_max
            .or(base.map(|b| b.c_max))
            .unwrap_or(native4k::objective::HuberSchedule::DEFAULT_C_MAX),
    };
    s.resolve()
}

#[derive(Debug, Args)]
pub struct LossCurvesArgs {
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    /// Number of midpoint samples of t in (0, 1).
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub points: usize,
}

pub fn loss_curves(ctx: &Context, a: &LossCurvesArgs) -> Result<i32> {
    let cfg = objective_config(ctx, &a.objective)?;
    if a.points == 0 {
        return Err(CliError::Usage("--points must be positive".into()));
    }
    let curve = loss_curve(&cfg, &midpoint_grid(a.points))?;
    let mut csv = String::from("t,snr,weight,threshold\n");
    for p in &curve {
        let _ = writeln!(csv, "{},{},{},{}", p.t, p.snr, p.weight, p.threshold);
    }
    let path = write_output(ctx, "loss_curves.csv", csv.as_bytes())?;
    println!("{} rows -> {}", curve.len(), path.display());
    Ok(0)
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    /// Latent height and width (even).
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    #[arg(long, default_value_t = native4k::objective::gradcheck::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, scale: f64) -> Result<LatentTensor> {
    Ok(LatentTensor::from_fn(c, h, w, |_, _, _| rng.gen_range(-scale..=scale))?)
}

pub fn loss_check(ctx: &Context, a: &LossCheckArgs) -> Result<i32> {
    let cfg = objective_config(ctx, &a.objective)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.global.seed);
    let (c, n) = (a.channels, a.size);
    let mut csv = String::from("trial,t,loss,max_relative_error\n");
    let mut worst = 0.0_f64;
    for trial in 0..a.trials {
        let clean = random_tensor(&mut rng, c, n, n, 1.0)?;
        let noise = random_tensor(&mut rng, c, n, n, 1.0)?;
        let t = rng.gen_range(0.02..0.98);
        let sample = FlowSample::new(clean, noise, t)?;
        let jitter = random_tensor(&mut rng, c, n, n, 0.5)?;
        let v = sample.target_velocity().affine(1.0, &jitter, 1.0)?;
        let loss = native4k::objective::snr_hw_loss(&sample, &v, &cfg)?.loss;
        let check = check_loss_gradient(&sample, &v, &cfg, a.step)?;
        worst = worst.max(check.max_relative_error);
        let _ = writeln!(csv, "{trial},{t},{loss},{}", check.max_relative_error);
    }
    write_output(ctx, "loss_check.csv", csv.as_bytes())?;
    let ok = worst < a.tolerance;
    println!(
        "max relative error {worst:.3e} over {} trials (tolerance {:e}): {}",
        a.trials,
        a.tolerance,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(if ok { 0 } else { 1 })
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// TOML file with [[stages]] entries; defaults to the config's curriculum.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Manifest with ArtiMuse scores to count retained records per stage.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Draw this many timesteps per stage and report their range.
    #[arg(long, default_value_t = 0)]
    pub preview: usize,
}

#[derive(Debug, Serialize)]
struct StageSummary {
    name: String,
    band: [u32; 2],
    convention: native4k::curriculum::TimestepConvention,
    percentile: f64,
    steps: u64,
    t_min: f64,
    t_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    records_scored: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    records_retained: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_retained_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preview_range: Option<[u32; 2]>,
}

pub fn curriculum_plan(ctx: &Context, a: &PlanArgs) -> Result<i32> {
    let plan = match &a.plan {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            CurriculumPlan::from_toml(&text)?
        }
        None => ctx.config.curriculum.clone().ok_or_else(|| {
            CliError::Usage("no curriculum plan: pass --plan or add [[curriculum.stages]] to the config".into())
        })?,
    };
    plan.validate()?;
    let (scored, unscored) = match &a.manifest {
        Some(m) => {
            let (records, _) = records_of(load_manifest(m)?);
            let (s, u): (Vec<_>, Vec<_>) = records
                .into_iter()
                .partition(|r| r.artimuse.is_some_and(f64::is_finite));
            (Some(s), u.len())
        }
        None => (None, 0),
    };
    if unscored > 0 {
        warn!("{unscored} records without a finite ArtiMuse score are not ranked");
    }
    let mut out = Vec::new();
    for (i, ps) in plan.stages.iter().enumerate() {
        let st = &ps.stage;
        let a_t = normalized_t(st.band.start(), st.convention)?;
        let b_t = normalized_t(st.band.end(), st.convention)?;
        let (retained, min_score) = match &scored {
            Some(s) => {
                let kept = filter_records(s, st)?;
                let min = kept.iter().filter_map(|r| r.artimuse).fold(None, |m: Option<f64>, v| {
                    Some(m.map_or(v, |m| m.min(v)))
                });
                (Some(kept.len()), min)
            }
            None => (None, None),
        };
        let preview_range = (a.preview > 0).then(|| {
            let mut sampler = TimestepSampler::new(st.band, ctx.config.global.seed.wrapping_add(i as u64));
            let (mut lo, mut hi) = (u32::MAX, 0);
            for _ in 0..a.preview {
                let t = sampler.sample();
                lo = lo.min(t);
                hi = hi.max(t);
            }
            [lo, hi]
        });
        println!(
            "{}: band [{}, {}] t in [{:.4}, {:.4}] top {}% for {} steps{}",
            st.name,
            st.band.start(),
            st.band.end(),
            a_t.min(b_t),
            a_t.max(b_t),
            st.percentile,
            ps.steps,
            retained.map(|n| format!(", {n} records")).unwrap_or_default()
        );
        out.push(StageSummary {
            name: st.name.clone(),
            band: [st.band.start(), st.band.end()],
            convention: st.convention,
            percentile: st.percentile,
            steps: ps.steps,
            t_min: a_t.min(b_t),
            t_max: a_t.max(b_t),
            records_scored: scored.as_ref().map(Vec::len),
            records_retained: retained,
            min_retained_score: min_score,
            preview_range,
        });
    }
    write_output(ctx, "curriculum_plan.json", &to_json(&out))?;
    Ok(0)
}

//! Aspect-ratio and resolution distribution of a manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{bucket_assign, BucketSet, CurationError, ImageMetaRecord, Orientation, Result};

/// Default log-AR bin width; bins are centered on multiples of it, so a
/// square image always falls in bin 0.
pub const DEFAULT_AR_BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArBin {
    pub index: i64,
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Linear-interpolated quantiles of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    /// Panics on an empty slice.
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Self {
            min: v[0],
            p05: q(0.05),
            p25: q(0.25),
            p50: q(0.5),
            p75: q(0.75),
            p95: q(0.95),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketCount {
    pub width: u32,
    pub height: u32,
    pub orientation: Orientation,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub records: usize,
    /// Records without dimensions; excluded from every statistic.
    pub missing_dims: usize,
    pub ar_bin_width: f64,
    pub ar_histogram: Vec<ArBin>,
    pub width: Quantiles,
    pub height: Quantiles,
    pub megapixels: Quantiles,
    pub orientation: BTreeMap<String, usize>,
    /// One row per bucket in set order, including empty buckets.
    pub buckets: Vec<BucketCount>,
}

/// Uses a record's stored crop plan when present, otherwise assigns one.
pub fn audit_report(records: &[ImageMetaRecord], buckets: &BucketSet, bin_width: f64) -> Result<AuditReport> {
    if records.is_empty() {
        return Err(CurationError::EmptyManifest);
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(CurationError::Config(format!(
            "AR bin width must be positive, got {bin_width}"
        )));
    }
    let dims: Vec<(u32, u32)> = records
        .iter()
        .filter_map(|r| r.dims())
        .filter(|&(w, h)| w > 0 && h > 0)
        .collect();
    if dims.is_empty() {
        return Err(CurationError::MissingDims(records[0].id.clone()));
    }

    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    let mut orientation = BTreeMap::new();
    let mut counts = vec![0usize; buckets.buckets().len()];
    for r in records {
        let Some((w, h)) = r.dims().filter(|&(w, h)| w > 0 && h > 0) else {
            continue;
        };
        let ln_ar = (f64::from(w) / f64::from(h)).ln();
        *bins.entry((ln_ar / bin_width).round() as i64).or_default() += 1;
        let o = match Orientation::of(w, h) {
            Orientation::Landscape => "landscape",
            Orientation::Portrait => "portrait",
            Orientation::Square => "square",
        };
        *orientation.entry(o.to_string()).or_default() += 1;
        let bucket = match &r.bucket {
            Some(plan) => plan.bucket,
            None => bucket_assign(w, h, buckets)?.bucket,
        };
        if let Some(i) = buckets.buckets().iter().position(|b| *b == bucket) {
            counts[i] += 1;
        }
    }

    let col = |f: fn((u32, u32)) -> f64| Quantiles::of(&dims.iter().map(|&d| f(d)).collect::<Vec<_>>());
    Ok(AuditReport {
        records: records.len(),
        missing_dims: records.len() - dims.len(),
        ar_bin_width: bin_width,
        ar_histogram: bins
            .into_iter()
            .map(|(index, count)| ArBin {
                index,
                low: (index as f64 - 0.5) * bin_width,
                high: (index as f64 + 0.5) * bin_width,
                count,
            })
            .collect(),
        width: col(|(w, _)| f64::from(w)),
        height: col(|(_, h)| f64::from(h)),
        megapixels: col(|(w, h)| f64::from(w) * f64::from(h) / 1e6),
        orientation,
        buckets: buckets
            .buckets()
            .iter()
            .zip(counts)
            .map(|(b, count)| BucketCount {
                width: b.width,
                height: b.height,
                orientation: b.orientation(),
                count,
            })
            .collect(),
    })
}

impl AuditReport {
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("bin,ln_ar_low,ln_ar_high,count\n");
        for b in &self.ar_histogram {
            let _ = writeln!(s, "{},{},{},{}", b.index, b.low, b.high, b.count);
        }
        s
    }

    pub fn buckets_csv(&self) -> String {
        let mut s = String::from("width,height,orientation,count\n");
        for b in &self.buckets {
            let o = serde_json::to_value(b.orientation).expect("enum serializes");
            let _ = writeln!(s, "{},{},{},{}", b.width, b.height, o.as_str().unwrap_or(""), b.count);
        }
        s
    }
}

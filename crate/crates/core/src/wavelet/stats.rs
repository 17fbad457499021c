//! Per-subband energy, tail and histogram statistics.

use serde::Serialize;

use super::{Subband, SubbandTensor};

/// Default tail thresholds on `|coefficient|`.
pub const DEFAULT_TAIL_THRESHOLDS: [f64; 2] = [0.5, 1.0];

/// Histogram of absolute coefficients over `[0, edges.last()]` with equal-width
/// bins. `log_counts[i] = log10(1 + counts[i])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub log_counts: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFraction {
    pub threshold: f64,
    /// Fraction of coefficients with `|w| > threshold`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandStats {
    pub band: &'static str,
    pub count: u64,
    pub energy: f64,
    pub energy_fraction: f64,
    pub mean_energy: f64,
    pub max_abs: f64,
    pub tails: Vec<TailFraction>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubbandStats {
    pub samples: usize,
    pub total_energy: f64,
    pub bands: Vec<BandStats>,
}

impl SubbandStats {
    pub fn band(&self, band: Subband) -> &BandStats {
        &self.bands[band as usize]
    }

    /// Long-format CSV: `band,bin_low,bin_high,count,log10_count`.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("band,bin_low,bin_high,count,log10_count\n");
        for b in &self.bands {
            let h = &b.histogram;
            for i in 0..h.counts.len() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    b.band,
                    h.edges[i],
                    h.edges[i + 1],
                    h.counts[i],
                    h.log_counts[i]
                ));
            }
        }
        out
    }
}

pub fn subband_stats(subbands: &SubbandTensor, thresholds: &[f64], bins: usize) -> SubbandStats {
    subband_stats_many(std::slice::from_ref(subbands), thresholds, bins)
}

/// Statistics pooled over several transformed samples. All four histograms
/// share the same edges, spanning `[0, max |w|]` over every band and sample.
///
/// When the pooled energy is zero every fraction is reported as 0.
pub fn subband_stats_many(samples: &[SubbandTensor], thresholds: &[f64], bins: usize) -> SubbandStats {
    let bins = bins.max(1);
    let global_max = samples
        .iter()
        .flat_map(|s| s.coefficients())
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    let upper = if global_max > 0.0 { global_max } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| upper * i as f64 / bins as f64).collect();

    struct Acc {
        count: u64,
        energy: f64,
        max_abs: f64,
        tails: Vec<u64>,
        hist: Vec<u64>,
    }

    let mut accs: Vec<Acc> = (0..4)
        .map(|_| Acc {
            count: 0,
            energy: 0.0,
            max_abs: 0.0,
            tails: vec![0; thresholds.len()],
            hist: vec![0; bins],
        })
        .collect();

    for sample in samples {
        for (band, values) in sample.bands() {
            let acc = &mut accs[band as usize];
            for &x in values {
                let a = x.abs();
                acc.count += 1;
                acc.energy += x * x;
                acc.max_abs = acc.max_abs.max(a);
                for (t, n) in thresholds.iter().zip(acc.tails.iter_mut()) {
                    if a > *t {
                        *n += 1;
                    }
                }
                let idx = ((a / upper) * bins as f64) as usize;
                acc.hist[idx.min(bins - 1)] += 1;
            }
        }
    }

    let total_energy: f64 = accs.iter().map(|a| a.energy).sum();
    let bands = Subband::ALL
        .iter()
        .zip(accs)
        .map(|(band, acc)| {
            let count = acc.count.max(1) as f64;
            BandStats {
                band: band.name(),
                count: acc.count,
                energy: acc.energy,
                energy_fraction: if total_energy > 0.0 {
                    acc.energy / total_energy
                } else {
                    0.0
                },
                mean_energy: acc.energy / count,
                max_abs: acc.max_abs,
                tails: thresholds
                    .iter()
                    .zip(&acc.tails)
                    .map(|(&threshold, &n)| TailFraction {
                        threshold,
                        fraction: n as f64 / count,
                    })
                    .collect(),
                histogram: Histogram {
                    edges: edges.clone(),
                    log_counts: acc.hist.iter().map(|&c| (1.0 + c as f64).log10()).collect(),
                    counts: acc.hist,
                },
            }
        })
        .collect();

    SubbandStats {
        samples: samples.len(),
        total_energy,
        bands,
    }
}

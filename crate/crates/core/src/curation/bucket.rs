//! Aspect-ratio bucketing with centered crop geometry.

use serde::{Deserialize, Serialize};

use super::{CurationError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Landscape,
    Portrait,
    Square,
}

impl Orientation {
    pub fn of(width: u32, height: u32) -> Self {
        match width.cmp(&height) {
            std::cmp::Ordering::Greater => Orientation::Landscape,
            std::cmp::Ordering::Less => Orientation::Portrait,
            std::cmp::Ordering::Equal => Orientation::Square,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bucket {
    pub width: u32,
    pub height: u32,
}

impl Bucket {
    pub fn orientation(&self) -> Orientation {
        Orientation::of(self.width, self.height)
    }

    pub fn pixels(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn log_ar(&self) -> f64 {
        (f64::from(self.width) / f64::from(self.height)).ln()
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }
}

/// Ordered list of target resolutions. Order matters for tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSet {
    buckets: Vec<Bucket>,
}

/// Landscape, portrait and square targets (W×H) for native-4K training.
pub const DEFAULT_BUCKETS: [(u32, u32); 15] = [
    (5440, 3072),
    (5184, 3264),
    (4992, 3328),
    (4736, 3520),
    (5824, 2880),
    (6272, 2688),
    (5568, 3008),
    (6336, 2624),
    (5632, 3008),
    (4608, 3648),
    (3072, 5440),
    (3648, 4608),
    (3520, 4736),
    (3328, 4992),
    (4096, 4096),
];

impl BucketSet {
    pub fn from_dims(dims: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let buckets: Vec<Bucket> = dims
            .into_iter()
            .map(|(w, h)| {
                if w == 0 || h == 0 || w % 2 != 0 || h % 2 != 0 {
                    Err(CurationError::InvalidBucket(w, h))
                } else {
                    Ok(Bucket {
                        width: w,
                        height: h,
                    })
                }
            })
            .collect::<Result<_>>()?;
        if buckets.is_empty() {
            return Err(CurationError::EmptyBucketSet);
        }
        Ok(Self { buckets })
    }

    pub fn default_table() -> Self {
        Self::from_dims(DEFAULT_BUCKETS).expect("built-in table is valid")
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn group(&self, orientation: Orientation) -> impl Iterator<Item = &Bucket> {
        self.buckets
            .iter()
            .filter(move |b| b.orientation() == orientation)
    }
}

/// Crop rectangle in source pixels. Coordinates are fractional so the crop
/// can match the bucket aspect ratio exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropPlan {
    pub bucket: Bucket,
    pub crop: CropRect,
    /// Output size after resizing the crop; equal to the bucket.
    pub resize: Bucket,
}

pub fn log_ar_distance(width: u32, height: u32, bucket: &Bucket) -> f64 {
    ((f64::from(width) / f64::from(height)).ln() - bucket.log_ar()).abs()
}

/// Picks the bucket closest in log aspect ratio (ties: more pixels, then
/// list order) and the maximal centered crop with that bucket's ratio.
pub fn bucket_assign(width: u32, height: u32, set: &BucketSet) -> Result<CropPlan> {
    if width == 0 || height == 0 {
        return Err(CurationError::InvalidDims(width, height));
    }
    let mut best: Option<(&Bucket, f64)> = None;
    for b in &set.buckets {
        let d = log_ar_distance(width, height, b);
        best = match best {
            None => Some((b, d)),
            Some((cur, cd)) if d < cd || (d == cd && b.pixels() > cur.pixels()) => Some((b, d)),
            keep => keep,
        };
    }
    let (bucket, _) = best.ok_or(CurationError::EmptyBucketSet)?;

    let (w, h) = (f64::from(width), f64::from(height));
    let (bw, bh) = (f64::from(bucket.width), f64::from(bucket.height));
    // Compare w/h against bw/bh without division.
    let (cw, ch) = if u64::from(width) * u64::from(bucket.height)
        >= u64::from(height) * u64::from(bucket.width)
    {
        ((h * bw / bh).min(w), h)
    } else {
        (w, (w * bh / bw).min(h))
    };
    Ok(CropPlan {
        bucket: *bucket,
        crop: CropRect {
            x: (w - cw) / 2.0,
            y: (h - ch) / 2.0,
            width: cw,
            height: ch,
        },
        resize: *bucket,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_groups() {
        let set = BucketSet::default_table();
        assert_eq!(set.buckets().len(), 15);
        assert_eq!(set.group(Orientation::Landscape).count(), 10);
        assert_eq!(set.group(Orientation::Portrait).count(), 4);
        assert_eq!(set.group(Orientation::Square).count(), 1);
    }

    #[test]
    fn exact_matches_map_to_themselves() {
        let set = BucketSet::default_table();
        let plan = bucket_assign(4096, 4096, &set).unwrap();
        assert_eq!(plan.bucket, Bucket { width: 4096, height: 4096 });
        assert_eq!(plan.crop, CropRect { x: 0.0, y: 0.0, width: 4096.0, height: 4096.0 });
        let plan = bucket_assign(5440, 3072, &set).unwrap();
        assert_eq!(plan.bucket, Bucket { width: 5440, height: 3072 });
        assert_eq!(plan.crop.width, 5440.0);
        assert_eq!(plan.crop.height, 3072.0);
    }

    #[test]
    fn wide_input_crops_width() {
        let set = BucketSet::default_table();
        let plan = bucket_assign(8000, 3000, &set).unwrap();
        // ln(8/3) = 0.981; widest bucket 6336x2624 has ln AR 0.881
        assert_eq!(plan.bucket, Bucket { width: 6336, height: 2624 });
        assert_eq!(plan.crop.height, 3000.0);
        let ar = plan.crop.width / plan.crop.height;
        assert!((ar / (6336.0 / 2624.0) - 1.0).abs() < 1e-12);
        assert!((plan.crop.x * 2.0 + plan.crop.width - 8000.0).abs() < 1e-9);
    }

    #[test]
    fn ties_prefer_larger_bucket_then_order() {
        let set = BucketSet::from_dims([(200, 100), (400, 200), (100, 200)]).unwrap();
        assert_eq!(bucket_assign(2000, 1000, &set).unwrap().bucket.width, 400);
        let same = BucketSet::from_dims([(400, 200), (200, 100)]).unwrap();
        assert_eq!(bucket_assign(2000, 1000, &same).unwrap().bucket.width, 400);
        let dupes = BucketSet::from_dims([(200, 100), (200, 100)]).unwrap();
        assert_eq!(bucket_assign(3, 1, &dupes).unwrap().bucket.width, 200);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            BucketSet::from_dims(std::iter::empty()),
            Err(CurationError::EmptyBucketSet)
        ));
        assert!(BucketSet::from_dims([(101, 100)]).is_err());
        assert!(bucket_assign(0, 10, &BucketSet::default_table()).is_err());
    }
}

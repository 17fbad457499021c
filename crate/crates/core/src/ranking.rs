//! Rank-based top-percentile selection.
//!
//! "Top p%" is resolved by rank rather than by score threshold: exactly
//! `⌈p·n / 100⌉` items survive, ordered by score descending with ties broken
//! by id ascending. This keeps the cut well defined under ties and invariant
//! to any monotone rescaling of the scores.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("percentile must be in (0, 100], got {0}")]
    InvalidPercentile(f64),
    #[error("record {0} has no score")]
    MissingScore(String),
    #[error("record {0} has a non-finite score")]
    NonFiniteScore(String),
}

/// Number of items kept when retaining the top `percentile` percent of `n`.
pub fn retained_count(n: usize, percentile: f64) -> usize {
    // p·n is exact for integral p and n < 2^53, so multiples of 100 divide exactly.
    let kept = (percentile * n as f64 / 100.0).ceil() as usize;
    kept.min(n)
}

pub fn validate_percentile(percentile: f64) -> Result<f64, RankError> {
    if percentile > 0.0 && percentile <= 100.0 {
        Ok(percentile)
    } else {
        Err(RankError::InvalidPercentile(percentile))
    }
}

/// Indices of the retained items, in rank order (best first).
pub fn top_percentile<T>(
    items: &[T],
    percentile: f64,
    score: impl Fn(&T) -> Option<f64>,
    id: impl Fn(&T) -> &str,
) -> Result<Vec<usize>, RankError> {
    validate_percentile(percentile)?;
    let mut scored = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let s = score(item).ok_or_else(|| RankError::MissingScore(id(item).to_string()))?;
        if !s.is_finite() {
            return Err(RankError::NonFiniteScore(id(item).to_string()));
        }
        scored.push((i, s));
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| id(&items[a.0]).cmp(id(&items[b.0])))
    });
    let keep = retained_count(items.len(), percentile);
    Ok(scored.into_iter().take(keep).map(|(i, _)| i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_use_ceiling() {
        assert_eq!(retained_count(10, 30.0), 3);
        assert_eq!(retained_count(11, 30.0), 4);
        assert_eq!(retained_count(10_000, 5.0), 500);
        assert_eq!(retained_count(1, 5.0), 1);
        assert_eq!(retained_count(0, 5.0), 0);
        assert_eq!(retained_count(7, 100.0), 7);
    }

    #[test]
    fn counts_match_integer_ceiling() {
        for n in 1..=1000usize {
            assert_eq!(retained_count(n, 30.0), (30 * n).div_ceil(100), "n={n}");
            assert_eq!(retained_count(n, 5.0), (5 * n).div_ceil(100), "n={n}");
        }
    }

    #[test]
    fn ties_break_by_id() {
        let items = [("d", 1.0), ("c", 2.0), ("b", 2.0), ("a", 3.0)];
        let kept = top_percentile(&items, 50.0, |x| Some(x.1), |x| x.0).unwrap();
        let ids: Vec<_> = kept.iter().map(|&i| items[i].0).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn rejects_missing_scores_and_bad_percentiles() {
        let items = [("a", Some(1.0)), ("b", None)];
        assert_eq!(
            top_percentile(&items, 50.0, |x| x.1, |x| x.0),
            Err(RankError::MissingScore("b".into()))
        );
        assert!(top_percentile(&items, 0.0, |x| x.1, |x| x.0).is_err());
        assert!(top_percentile(&items, 100.5, |x| x.1, |x| x.0).is_err());
    }
}

use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::Nanos;

/// Exact latency distribution: every sample is kept, sorted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatencyStats {
    sorted: Vec<Nanos>,
}

/// Rank used for percentile `p` of `n` samples: ceil(p * n), at least 1.
pub fn percentile_rank(p: f64, n: usize) -> usize {
    let x = p * n as f64;
    // absorb float noise so that e.g. 0.9999 * 1e6 lands on 999900 exactly
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (k as usize).clamp(1, n.max(1))
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<Nanos>) -> Self {
        samples.sort_unstable();
        LatencyStats { sorted: samples }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Sample at index ceil(p * N) - 1 of the sorted set.
    pub fn percentile(&self, p: f64) -> Result<Nanos> {
        if self.sorted.is_empty() {
            return Err(Error::Statistics("percentile of an empty sample set".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Statistics(format!("percentile {p} outside (0, 1)")));
        }
        Ok(self.sorted[percentile_rank(p, self.sorted.len()) - 1])
    }

    pub fn mean(&self) -> Option<f64> {
        if self.sorted.is_empty() {
            return None;
        }
        let sum: u128 = self.sorted.iter().map(|&v| v as u128).sum();
        Some(sum as f64 / self.sorted.len() as f64)
    }

    pub fn max(&self) -> Option<Nanos> {
        self.sorted.last().copied()
    }

    pub fn summary(&self) -> LatencySummary {
        let p = |q| self.percentile(q).ok();
        LatencySummary {
            count: self.len(),
            mean_ns: self.mean(),
            p50_ns: p(0.5),
            p99_ns: p(0.99),
            p99_9_ns: p(0.999),
            p99_99_ns: p(0.9999),
            p99_9999_ns: p(0.999999),
            max_ns: self.max(),
        }
    }
}

/// Headline numbers of a distribution. Fields are `None` for an empty set.
#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct LatencySummary {
    pub count: usize,
    pub mean_ns: Option<f64>,
    pub p50_ns: Option<Nanos>,
    pub p99_ns: Option<Nanos>,
    pub p99_9_ns: Option<Nanos>,
    pub p99_99_ns: Option<Nanos>,
    pub p99_9999_ns: Option<Nanos>,
    pub max_ns: Option<Nanos>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_convention() {
        let s = LatencyStats::from_samples(vec![4, 1, 3, 2]);
        assert_eq!(s.percentile(0.5).unwrap(), 2);
        assert_eq!(s.percentile(0.76).unwrap(), 4);
        assert!(LatencyStats::default().percentile(0.5).is_err());
        assert!(s.percentile(1.0).is_err());
    }

    #[test]
    fn high_percentile_of_constant_set() {
        let s = LatencyStats::from_samples(vec![7; 1_000_000]);
        assert_eq!(s.percentile(0.9999).unwrap(), 7);
        assert_eq!(percentile_rank(0.9999, 1_000_000), 999_900);
        assert_eq!(percentile_rank(0.99, 100), 99);
    }
}

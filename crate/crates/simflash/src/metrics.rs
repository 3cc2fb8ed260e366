//! Latency and throughput aggregation over raw op logs. Percentiles come
//! from the exact sorted samples (nearest-rank), not a sketch; at the scales
//! this simulator runs, holding every sample is cheaper than defending an
//! approximation.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub p25_ns: u64,
    pub p50_ns: u64,
    pub p75_ns: u64,
    pub p99_ns: u64,
}

/// Nearest-rank percentile over an ascending-sorted slice: the smallest
/// sample at or above fraction `q` of the distribution.
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q) && q > 0.0);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Summarize a sample set; sorts in place. Empty input has no percentiles.
pub fn summarize(samples: &mut Vec<u64>) -> Option<LatencySummary> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_unstable();
    Some(LatencySummary {
        count: samples.len() as u64,
        p25_ns: percentile(samples, 0.25),
        p50_ns: percentile(samples, 0.50),
        p75_ns: percentile(samples, 0.75),
        p99_ns: percentile(samples, 0.99),
    })
}

impl LatencySummary {
    /// Middle-half width, the spread measure reported next to the median.
    pub fn interquartile_ns(&self) -> u64 {
        self.p75_ns - self.p25_ns
    }
}

/// Queries per second given a count and the nanoseconds they occupied.
pub fn qps(ops: u64, elapsed_ns: u64) -> f64 {
    if elapsed_ns == 0 {
        return 0.0;
    }
    ops as f64 * 1e9 / elapsed_ns as f64
}

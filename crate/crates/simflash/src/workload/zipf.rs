//! Exact Zipf rank sampling. Rank r (1-based) is drawn with probability
//! r^(-alpha) / H where H is the generalized harmonic normalizer over all
//! ranks, with no curve-fit approximation: an inverse-CDF step picks one
//! power-of-two rank block from the precomputed block masses, and rejection
//! inside the block recovers the exact per-rank law. Within a block the
//! density varies by at most 2^alpha, so the rejection loop accepts quickly
//! even at large alpha.

use rand::Rng;

/// Compensated accumulator; summing a hundred million terms naively loses
/// more precision than the acceptance tolerances downstream can spare.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

#[derive(Clone, Debug)]
pub struct ZipfSampler {
    alpha: f64,
    ranks: u64,
    /// H_{N,alpha}: total mass before normalization.
    normalizer: f64,
    /// Cumulative unnormalized mass of ranks [2^0..2^1), [2^1..2^2), ...
    block_cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(alpha: f64, ranks: u64) -> Self {
        assert!(ranks >= 1, "need at least one rank");
        assert!(alpha.is_finite() && alpha >= 0.0, "exponent must be non-negative");
        let blocks = 64 - (ranks).leading_zeros();
        let mut block_sums = vec![Kahan::default(); blocks as usize];
        for r in 1..=ranks {
            let j = r.ilog2() as usize;
            block_sums[j].add((r as f64).powf(-alpha));
        }
        let mut block_cdf = Vec::with_capacity(block_sums.len());
        let mut total = 0.0;
        for b in &block_sums {
            total += b.sum;
            block_cdf.push(total);
        }
        ZipfSampler { alpha, ranks, normalizer: total, block_cdf }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ranks(&self) -> u64 {
        self.ranks
    }

    /// Analytic probability of the 0-based rank.
    pub fn mass(&self, rank: u64) -> f64 {
        assert!(rank < self.ranks);
        ((rank + 1) as f64).powf(-self.alpha) / self.normalizer
    }

    /// Draw a 0-based rank.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = rng.gen::<f64>() * self.normalizer;
        let j = self.block_cdf.partition_point(|&c| c <= u);
        let j = j.min(self.block_cdf.len() - 1);
        let lo = 1u64 << j;
        let hi = (lo * 2 - 1).min(self.ranks);
        let lead = (lo as f64).powf(-self.alpha);
        loop {
            let r = rng.gen_range(lo..=hi);
            let accept = (r as f64).powf(-self.alpha) / lead;
            if rng.gen::<f64>() < accept {
                return r - 1;
            }
        }
    }
}

/// Smallest-error rank count whose top rank carries `top_mass` of the
/// distribution: scans the harmonic series until 1/H drops past the target
/// and keeps the nearer endpoint.
pub fn fit_rank_count(alpha: f64, top_mass: f64) -> u64 {
    assert!(top_mass > 0.0 && top_mass <= 1.0);
    let target = 1.0 / top_mass;
    let mut h = Kahan::default();
    let mut r = 0u64;
    let mut prev_h = 0.0;
    while h.sum < target {
        r += 1;
        prev_h = h.sum;
        h.add((r as f64).powf(-alpha));
    }
    if r <= 1 {
        return 1;
    }
    let err_under = (1.0 / prev_h - top_mass).abs();
    let err_over = (1.0 / h.sum - top_mass).abs();
    if err_under < err_over {
        r - 1
    } else {
        r
    }
}

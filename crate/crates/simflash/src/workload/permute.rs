//! Seeded bijection on [0, n). Popularity ranks index into the key space
//! through this map so that hot keys scatter across leaf pages instead of
//! clustering at the front of the sorted order.
//!
//! A four-round balanced Feistel network permutes the enclosing power-of-four
//! domain; values that land outside [0, n) are walked forward through the
//! network until they fall back inside, which preserves bijectivity on the
//! exact domain.

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Clone, Debug)]
pub struct KeyPermutation {
    domain: u64,
    half_bits: u32,
    round_keys: [u64; 4],
}

impl KeyPermutation {
    pub fn new(domain: u64, seed: u64) -> Self {
        assert!(domain >= 1);
        let bits = 64 - (domain - 1).leading_zeros().min(63);
        let half_bits = bits.div_ceil(2).max(1);
        let mut round_keys = [0u64; 4];
        let mut s = seed;
        for k in &mut round_keys {
            s = splitmix64(s);
            *k = s;
        }
        KeyPermutation { domain, half_bits, round_keys }
    }

    fn network(&self, x: u64) -> u64 {
        let half_mask = (1u64 << self.half_bits) - 1;
        let mut left = (x >> self.half_bits) & half_mask;
        let mut right = x & half_mask;
        for &k in &self.round_keys {
            let next = left ^ (splitmix64(right ^ k) & half_mask);
            left = right;
            right = next;
        }
        (left << self.half_bits) | right
    }

    pub fn domain(&self) -> u64 {
        self.domain
    }

    /// Image of `x` under the permutation; `x` must lie in [0, domain).
    pub fn apply(&self, x: u64) -> u64 {
        assert!(x < self.domain);
        let mut y = self.network(x);
        while y >= self.domain {
            y = self.network(y);
        }
        y
    }
}

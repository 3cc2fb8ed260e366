//! Range predicates lowered onto an equality-only match engine.
//!
//! A comparison against a power of two needs no subtraction: `k < 2^a` holds
//! exactly when the bits above position `a` are all zero, which a masked
//! equality probe can check directly. A range therefore decomposes into one
//! probe that over-approximates the upper bound and one, applied negated,
//! that under-approximates the lower bound. The combined bitmap is a superset
//! of the true range; the host filters the gathered rows down to the exact
//! answer.
//!
//! An optional second on-chip pass repeats the trick inside the residual bit
//! region the first pass could not see (the span between the two powers of
//! two). Its extra probes only ever remove keys that are provably outside
//! the requested range, so the bitmap can shrink but never lose a match.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{CombineExpr, Probe};

use super::row::FieldSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// Accept keys with `lower < k < upper`.
    #[default]
    Strict,
    /// Accept keys with `lower <= k <= upper`.
    Inclusive,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InvalidBounds {
    #[error("range bounds must satisfy 0 < lower < upper")]
    Unordered,
    #[error("bound {bound:#x} does not fit in a {width}-bit field")]
    TooWide { bound: u64, width: u32 },
}

/// Two equality probes standing in for one range predicate.
///
/// `upper` accepts every key below the next power of two at or above the
/// upper bound. `lower` accepts every key below the largest power of two at
/// or below the lower bound and is meant to be negated, so the combined
/// bitmap is `upper AND NOT lower`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangePlan {
    pub field: FieldSpec,
    pub upper: Probe,
    pub lower: Probe,
    /// Smallest key the caller actually wants.
    lo: u64,
    /// Largest key the caller actually wants.
    hi: u64,
    /// Bit length of `hi`: the first pass accepts keys up to `2^a - 1`.
    a: u32,
    /// `lower` rejects keys below `2^b`.
    b: u32,
}

/// Probe set and combine rule for one chip pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
    pub expr: CombineExpr,
}

fn bit_len(x: u64) -> u32 {
    64 - x.leading_zeros()
}

/// Probe accepting keys whose top `count` field bits are zero. A zero-width
/// prefix masks nothing and matches every slot.
fn zero_prefix_probe(field: FieldSpec, count: u32) -> Probe {
    if count == 0 {
        Probe { key: 0, mask: 0 }
    } else {
        Probe { key: 0, mask: field.top_bits(count).mask() }
    }
}

pub fn decompose_range(
    lower: u64,
    upper: u64,
    field: FieldSpec,
    mode: BoundsMode,
) -> Result<RangePlan, InvalidBounds> {
    if lower == 0 || lower >= upper {
        return Err(InvalidBounds::Unordered);
    }
    if upper > field.max_value() {
        return Err(InvalidBounds::TooWide { bound: upper, width: field.width });
    }
    let (lo, hi) = match mode {
        BoundsMode::Strict => (lower + 1, upper - 1),
        BoundsMode::Inclusive => (lower, upper),
    };
    if lo > hi {
        return Err(InvalidBounds::Unordered);
    }

    let a = bit_len(hi);
    let b = lo.ilog2();
    Ok(RangePlan {
        field,
        upper: zero_prefix_probe(field, field.width - a),
        lower: zero_prefix_probe(field, field.width - b),
        lo,
        hi,
        a,
        b,
    })
}

impl RangePlan {
    /// Inclusive bounds of the keys the caller wants.
    pub fn target(&self) -> (u64, u64) {
        (self.lo, self.hi)
    }

    /// Inclusive bounds of the keys the first pass accepts.
    pub fn accepted(&self) -> (u64, u64) {
        (1u64 << self.b, ((1u64 << (self.a - 1)) - 1) * 2 + 1)
    }

    /// First chip pass: `upper AND NOT lower`.
    pub fn first_pass(&self) -> ProbeSet {
        ProbeSet {
            probes: vec![self.upper, self.lower],
            expr: CombineExpr::and(
                CombineExpr::probe(0),
                CombineExpr::not(CombineExpr::probe(1)),
            ),
        }
    }

    /// Second chip pass: the first pass plus exclusion probes over the
    /// residual bit regions. Every key the extra probes remove lies outside
    /// the target range, so the result is never smaller than the exact
    /// answer and never larger than the first pass.
    pub fn refined_pass(&self) -> ProbeSet {
        let ProbeSet { mut probes, mut expr } = self.first_pass();
        let field = self.field;

        // Keys in [2^(a-1), 2^a - 1] carry bit a-1; among them the low
        // a-1 bits decide acceptance. Excluding the band whose low part
        // exceeds the next power-of-two envelope of hi's low part removes
        // only keys above hi.
        let top_half = 1u64 << (self.a - 1);
        if self.hi < self.accepted().1 {
            let low_max = self.hi - top_half;
            let low_len = bit_len(low_max);
            if low_len < self.a - 1 {
                let marker = field.bit_offset + field.width - self.a;
                let has_top_bit = Probe {
                    key: FieldSpec::new(marker, 1).place(1).unwrap(),
                    mask: FieldSpec::new(marker, 1).mask(),
                };
                let low_region = FieldSpec::new(marker + 1, self.a - 1);
                let low_small = zero_prefix_probe(low_region, self.a - 1 - low_len);
                let i = probes.len();
                probes.push(has_top_bit);
                probes.push(low_small);
                expr = CombineExpr::and(
                    expr,
                    CombineExpr::not(CombineExpr::and(
                        CombineExpr::probe(i),
                        CombineExpr::not(CombineExpr::probe(i + 1)),
                    )),
                );
            }
        }

        // Keys in [2^b, 2^(b+1)) survived the lower probe but may still sit
        // below lo. Their low b bits decide; excluding the sub-band under
        // the largest power of two that stays below lo removes only keys
        // below lo.
        let band = 1u64 << self.b;
        if self.lo > band {
            let low_max = (self.lo - 1) - band;
            let d = (low_max + 1).ilog2();
            let band_spec = field.top_bits(field.width - self.b);
            let in_band = Probe {
                key: band_spec.place(1).unwrap(),
                mask: band_spec.mask(),
            };
            let low_region =
                FieldSpec::new(field.bit_offset + field.width - self.b, self.b);
            let low_small = zero_prefix_probe(low_region, self.b - d);
            let i = probes.len();
            probes.push(in_band);
            probes.push(low_small);
            expr = CombineExpr::and(
                expr,
                CombineExpr::not(CombineExpr::and(
                    CombineExpr::probe(i),
                    CombineExpr::probe(i + 1),
                )),
            );
        }

        ProbeSet { probes, expr }
    }

    /// Exact host-side residency check for one key.
    pub fn contains(&self, key: u64) -> bool {
        let v = self.field.extract(key);
        self.lo <= v && v <= self.hi
    }
}

/// Whether one probe accepts a key image.
pub fn probe_matches(probe: Probe, key: u64) -> bool {
    (key ^ probe.key) & probe.mask == 0
}

/// Evaluate a probe set against a single key image, the way the match
/// engine would against one slot.
pub fn probe_set_matches(set: &ProbeSet, key: u64) -> bool {
    fn eval(expr: &CombineExpr, hits: &[bool]) -> bool {
        match expr {
            CombineExpr::Probe(i) => hits[*i],
            CombineExpr::And(a, b) => eval(a, hits) && eval(b, hits),
            CombineExpr::Or(a, b) => eval(a, hits) || eval(b, hits),
            CombineExpr::Not(a) => !eval(a, hits),
        }
    }
    let hits: Vec<bool> = set.probes.iter().map(|&p| probe_matches(p, key)).collect();
    eval(&set.expr, &hits)
}

/// Drop the false positives a chip pass left behind.
pub fn refine_range<'a, T>(
    plan: &'a RangePlan,
    candidates: impl IntoIterator<Item = (T, u64)> + 'a,
) -> impl Iterator<Item = (T, u64)> + 'a {
    candidates.into_iter().filter(|&(_, key)| plan.contains(key))
}

//! Workload shape and the deterministic operation stream generated from it.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::permute::KeyPermutation;
use super::zipf::ZipfSampler;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Uniform,
    Zipf { alpha: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Get,
    Put,
    FullPageRead,
}

/// One generated request. `value` is only meaningful for puts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Op {
    pub index: u64,
    pub kind: OpKind,
    pub key: u64,
    pub value: u64,
    pub warmup: bool,
}

fn default_warmup_fraction() -> f64 {
    0.3
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub key_count: u64,
    pub op_count: u64,
    /// Fraction of operations that read; the rest are puts.
    pub read_ratio: f64,
    pub distribution: Distribution,
    /// Fraction of reads that fetch the whole page instead of one key.
    #[serde(default)]
    pub full_page_read_ratio: f64,
    /// Leading fraction of operations excluded from reported metrics.
    #[serde(default = "default_warmup_fraction")]
    pub warmup_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("{name} must lie in [0, 1]")]
    RatioOutOfRange { name: &'static str },
    #[error("key_count must be at least 1")]
    NoKeys,
    #[error("zipf exponent must be a finite non-negative number")]
    BadExponent,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        for (name, v) in [
            ("read_ratio", self.read_ratio),
            ("full_page_read_ratio", self.full_page_read_ratio),
            ("warmup_fraction", self.warmup_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(SpecError::RatioOutOfRange { name });
            }
        }
        if self.key_count == 0 {
            return Err(SpecError::NoKeys);
        }
        if let Distribution::Zipf { alpha } = self.distribution {
            if !alpha.is_finite() || alpha < 0.0 {
                return Err(SpecError::BadExponent);
            }
        }
        Ok(())
    }

    pub fn warmup_ops(&self) -> u64 {
        (self.op_count as f64 * self.warmup_fraction).round() as u64
    }
}

enum RankSampler {
    Uniform,
    Zipf(ZipfSampler),
}

/// Deterministic iterator over the workload's operations.
pub struct OpStream {
    rng: ChaCha8Rng,
    sampler: RankSampler,
    permutation: KeyPermutation,
    key_count: u64,
    read_ratio: f64,
    full_page_read_ratio: f64,
    warmup_ops: u64,
    op_count: u64,
    next: u64,
}

impl OpStream {
    pub fn new(spec: &WorkloadSpec) -> Result<Self, SpecError> {
        spec.validate()?;
        let sampler = match spec.distribution {
            Distribution::Uniform => RankSampler::Uniform,
            Distribution::Zipf { alpha } => RankSampler::Zipf(ZipfSampler::new(alpha, spec.key_count)),
        };
        Ok(OpStream {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            sampler,
            permutation: KeyPermutation::new(spec.key_count, spec.seed ^ 0x5EED_F00D),
            key_count: spec.key_count,
            read_ratio: spec.read_ratio,
            full_page_read_ratio: spec.full_page_read_ratio,
            warmup_ops: spec.warmup_ops(),
            op_count: spec.op_count,
            next: 0,
        })
    }
}

impl Iterator for OpStream {
    type Item = Op;

    fn next(&mut self) -> Option<Op> {
        if self.next >= self.op_count {
            return None;
        }
        let index = self.next;
        self.next += 1;

        let kind = if self.rng.gen::<f64>() < self.read_ratio {
            if self.rng.gen::<f64>() < self.full_page_read_ratio {
                OpKind::FullPageRead
            } else {
                OpKind::Get
            }
        } else {
            OpKind::Put
        };
        let rank = match &self.sampler {
            RankSampler::Uniform => self.rng.gen_range(0..self.key_count),
            RankSampler::Zipf(z) => z.sample(&mut self.rng),
        };
        let key = self.permutation.apply(rank);
        let value = if kind == OpKind::Put { self.rng.gen() } else { 0 };
        Some(Op { index, kind, key, value, warmup: index < self.warmup_ops })
    }
}

//! Key-value workload generation: skewed key popularity, key permutation,
//! and closed-loop request replay.

mod permute;
mod runner;
mod spec;
mod zipf;

pub use permute::KeyPermutation;
pub use runner::{pipelined_point_reads, run, OpRecord, PointRead, RunLog};
pub use spec::{Distribution, Op, OpKind, OpStream, SpecError, WorkloadSpec};
pub use zipf::{fit_rank_count, ZipfSampler};

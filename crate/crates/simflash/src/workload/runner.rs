//! Closed-loop execution of an operation stream against a store, and a
//! fixed-depth pipelined driver for pure point-read experiments.

use std::io;

use serde::Serialize;

use crate::chip::MatchBitmap;
use crate::controller::{Engine, OpError, OpOutcome, OutOfRange, Probe};
use crate::host::{Store, StoreError, TopLevelIndex};

use super::spec::{OpKind, OpStream, WorkloadSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OpRecord {
    pub index: u64,
    pub kind: OpKind,
    pub warmup: bool,
    pub start_ns: u64,
    pub end_ns: u64,
    /// Bytes that crossed the host interface while this op ran.
    pub host_bytes: u64,
}

impl OpRecord {
    pub fn latency_ns(&self) -> u64 {
        self.end_ns - self.start_ns
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunLog {
    pub records: Vec<OpRecord>,
    /// Time spent waiting out buffered writebacks after the last op.
    pub drain_ns: u64,
    /// Full wall time of the run, drain included.
    pub elapsed_ns: u64,
}

impl RunLog {
    /// Records that count toward reported metrics.
    pub fn measured(&self) -> impl Iterator<Item = &OpRecord> {
        self.records.iter().filter(|r| !r.warmup)
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "index,kind,warmup,start_ns,end_ns,host_bytes")?;
        for r in &self.records {
            let kind = match r.kind {
                OpKind::Get => "get",
                OpKind::Put => "put",
                OpKind::FullPageRead => "full_page_read",
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.index, kind, r.warmup, r.start_ns, r.end_ns, r.host_bytes
            )?;
        }
        Ok(())
    }
}

/// Run every op in the spec against the store, one at a time, then wait out
/// the write buffer. Time only advances while the device works, so the log's
/// timestamps are exact.
pub fn run(store: &mut Store, spec: &WorkloadSpec) -> Result<RunLog, StoreError> {
    let stream = OpStream::new(spec).expect("spec validated by the caller");
    let run_start = store.engine().now();
    let mut records = Vec::with_capacity(spec.op_count as usize);
    for op in stream {
        store.engine_mut().refresh_tick();
        let start = store.engine().now();
        let bytes_before = store.engine().stats().host_bytes;
        match op.kind {
            OpKind::Get => {
                store.get(op.key)?;
            }
            OpKind::Put => store.put(op.key, op.value)?,
            OpKind::FullPageRead => {
                store.read_page(op.key)?;
            }
        }
        records.push(OpRecord {
            index: op.index,
            kind: op.kind,
            warmup: op.warmup,
            start_ns: start,
            end_ns: store.engine().now(),
            host_bytes: store.engine().stats().host_bytes - bytes_before,
        });
    }
    let drain_start = store.engine().now();
    store.drain();
    let end = store.engine().now();
    Ok(RunLog {
        records,
        drain_ns: end - drain_start,
        elapsed_ns: end - run_start,
    })
}

/// Result of one pipelined point read: the match bitmap, or `None` when the
/// key was absent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointRead {
    pub key: u64,
    pub bitmap: Option<MatchBitmap>,
}

/// Issue point queries with up to `depth` in flight and return the outcomes
/// in submission order plus the elapsed device time. Keys must fall under
/// the index; the engine must start idle.
pub fn pipelined_point_reads(
    engine: &mut Engine,
    index: &TopLevelIndex,
    keys: &[u64],
    depth: usize,
) -> Result<(Vec<PointRead>, u64), OutOfRange> {
    assert!(depth >= 1);
    let start = engine.now();
    let mut results: Vec<Option<PointRead>> = vec![None; keys.len()];
    let mut op_slots = std::collections::HashMap::new();
    let mut submitted = 0usize;
    let mut completed = 0usize;
    while completed < keys.len() {
        while submitted < keys.len() && submitted - completed < depth {
            let key = keys[submitted];
            let pair = index
                .locate(key)
                .expect("pipelined reads address indexed keys only");
            let op = engine.submit_point(
                pair.key_page,
                pair.value_page,
                Probe { key, mask: u64::MAX },
            )?;
            op_slots.insert(op, submitted);
            submitted += 1;
        }
        let done = engine
            .run_until_completion()
            .expect("ops are in flight, something must complete");
        let slot = op_slots.remove(&done.op_id).expect("unknown completion");
        let bitmap = match done.outcome {
            OpOutcome::Point(Ok(r)) => Some(r.bitmap),
            OpOutcome::Point(Err(OpError::KeyNotFound)) => None,
            other => unreachable!("point op resolved as {other:?}"),
        };
        results[slot] = Some(PointRead { key: keys[slot], bitmap });
        completed += 1;
    }
    let out = results.into_iter().map(|r| r.unwrap()).collect();
    Ok((out, engine.now() - start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::{ChipGeometry, TimingParams, PAGE_BYTES};
    use crate::controller::{ControllerParams, CurrentParams, SchedulerKind};
    use crate::host::{Mode, Record, StoreParams};
    use crate::reliability::{EccParams, Randomizer};
    use crate::workload::spec::Distribution;

    fn engine(params: ControllerParams) -> Engine {
        let geometry = ChipGeometry {
            channels: 4,
            packages_per_channel: 1,
            dies_per_package: 2,
            planes_per_die: 1,
            blocks_per_plane: 8,
            pages_per_block: 32,
            page_size: PAGE_BYTES as u32,
        };
        Engine::new(
            geometry,
            TimingParams::default(),
            CurrentParams::default(),
            EccParams::default(),
            Randomizer::default(),
            params,
            128,
            11,
            false,
        )
        .unwrap()
    }

    fn store(mode: Mode, frames: usize) -> Store {
        Store::open(
            engine(ControllerParams::default()),
            (0..8 * 512u64).map(|k| Record { key: k, value: k.wrapping_mul(3) }),
            StoreParams::new(mode, frames),
        )
        .unwrap()
    }

    fn spec() -> WorkloadSpec {
        WorkloadSpec {
            key_count: 8 * 512,
            op_count: 60,
            read_ratio: 0.5,
            distribution: Distribution::Uniform,
            full_page_read_ratio: 0.1,
            warmup_fraction: 0.3,
            seed: 21,
        }
    }

    #[test]
    fn log_covers_every_op_and_flags_warmup() {
        let mut s = store(Mode::Sim, 64);
        let log = run(&mut s, &spec()).unwrap();
        assert_eq!(log.records.len(), 60);
        assert_eq!(log.records.iter().filter(|r| r.warmup).count(), 18);
        assert_eq!(log.measured().count(), 42);
        assert!(log.records.windows(2).all(|w| w[0].end_ns <= w[1].start_ns));
    }

    #[test]
    fn identical_seeds_produce_identical_logs() {
        let mut a = store(Mode::Sim, 16);
        let mut b = store(Mode::Sim, 16);
        let la = run(&mut a, &spec()).unwrap();
        let lb = run(&mut b, &spec()).unwrap();
        assert_eq!(la.records, lb.records);
        assert_eq!(la.elapsed_ns, lb.elapsed_ns);
    }

    #[test]
    fn sim_point_reads_cost_the_pinned_latency_and_bytes() {
        let mut s = store(Mode::Sim, 64);
        let mut w = spec();
        w.read_ratio = 1.0;
        w.full_page_read_ratio = 0.0;
        w.op_count = 20;
        let log = run(&mut s, &w).unwrap();
        for r in &log.records {
            assert_eq!(r.latency_ns(), 21_103);
            assert_eq!(r.host_bytes, 128);
        }
        assert_eq!(log.drain_ns, 0);
    }

    #[test]
    fn elapsed_includes_the_drain_of_buffered_writes() {
        let mut s = store(Mode::Sim, 2);
        let mut w = spec();
        w.read_ratio = 0.0;
        w.op_count = 30;
        let log = run(&mut s, &w).unwrap();
        assert!(s.stats().writebacks > 0, "evictions must have started writebacks");
        assert!(log.drain_ns > 0, "in-flight writebacks must settle at the end");
        let last = log.records.last().unwrap().end_ns;
        assert_eq!(log.elapsed_ns, last + log.drain_ns - log.records[0].start_ns);
    }

    #[test]
    fn csv_export_round_trips_the_header_and_rows() {
        let mut s = store(Mode::Baseline, 16);
        let mut w = spec();
        w.op_count = 5;
        let log = run(&mut s, &w).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("index,kind,warmup,start_ns,end_ns,host_bytes"));
    }

    #[test]
    fn pipelined_reads_return_serial_bitmaps_faster() {
        let records: Vec<Record> =
            (0..4 * 512u64).map(|k| Record { key: k, value: !k }).collect();
        let keys: Vec<u64> = (0..64u64).map(|i| (i * 97) % 2048).collect();

        let mut serial = engine(ControllerParams::default());
        let (index, _) = seed_engine(&mut serial, &records);
        let (serial_out, serial_ns) =
            pipelined_point_reads(&mut serial, &index, &keys, 1).unwrap();

        let mut deep = engine(ControllerParams::default());
        let (index, _) = seed_engine(&mut deep, &records);
        let (deep_out, deep_ns) =
            pipelined_point_reads(&mut deep, &index, &keys, 16).unwrap();

        assert_eq!(serial_out, deep_out);
        assert!(deep_out.iter().all(|r| r.bitmap.is_some()));
        assert!(
            deep_ns * 2 < serial_ns,
            "depth 16 should overlap dies: {deep_ns} vs {serial_ns}"
        );
    }

    #[test]
    fn deadline_scheduler_merges_duplicate_keys_in_flight() {
        let records: Vec<Record> =
            (0..4 * 512u64).map(|k| Record { key: k, value: !k }).collect();
        let keys = vec![700u64; 12];

        let params = ControllerParams {
            scheduler: SchedulerKind::Deadline,
            ..ControllerParams::default()
        };
        let mut e = engine(params);
        let (index, _) = seed_engine(&mut e, &records);
        let (out, _) = pipelined_point_reads(&mut e, &index, &keys, 12).unwrap();
        assert!(out.iter().all(|r| r.bitmap.is_some()));
        assert!(e.stats().merged_searches > 0);
    }

    fn seed_engine(
        engine: &mut Engine,
        records: &[Record],
    ) -> (TopLevelIndex, usize) {
        let (index, pages) = crate::host::build_leaves(records);
        for (leaf, (keys, values)) in pages.iter().enumerate() {
            engine.bulk_load_page(2 * leaf as u64, keys).unwrap();
            engine.bulk_load_page(2 * leaf as u64 + 1, values).unwrap();
        }
        (index, pages.len())
    }
}

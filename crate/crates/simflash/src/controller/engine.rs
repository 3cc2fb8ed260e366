//! The discrete-event core. Host operations become per-die step sessions;
//! the engine arbitrates channel buses (store-and-forward, FCFS) and the
//! per-chip peak-current budget, drives the flash device model, and retires
//! phases into the event log and energy ledger. Time is event-stepped: the
//! heap orders (timestamp, sequence), so equal-time events replay in issue
//! order and whole runs are bit-reproducible for a given seed.

use std::cmp::Reverse;
use std::collections::{btree_map, BTreeMap, BinaryHeap, VecDeque};
use std::mem;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{
    match_page, slot_to_chunk_bitmap, BusMode, ChipError, ChipGeometry, ChunkBitmap, FlashDevice,
    GeometryError, MatchBitmap, PhysPageAddr, TimingParams, CHUNK_BYTES, PAGE_BYTES,
};
use crate::reliability::{
    correct_full_page, EccParams, LogicalPage, OpenVerdict, Randomizer, RefreshQueue,
};
use crate::{SimTime, US};

use super::address::OutOfRange;
use super::energy::{CurrentParams, EnergyCategory, EnergyLedger};
use super::ftl::{Ftl, OutOfSpace};
use super::log::{EventLog, EventRecord};
use super::session::{
    erase_steps, page_stream_steps, peak_array_ua, point_key_steps, point_value_steps,
    program_steps, scan_steps, CombineExpr, Probe, Step,
};

/// How searches are admitted: immediately, or pooled per key page until a
/// deadline so coincident searches share one open.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    #[default]
    Fcfs,
    Deadline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub scheduler: SchedulerKind,
    /// How long a pooled search may wait for mergeable company.
    pub batch_deadline_ns: SimTime,
    /// Peak array-rail current allowed per chip; `None` lifts the limit.
    pub power_budget_ua: Option<u64>,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            scheduler: SchedulerKind::Fcfs,
            batch_deadline_ns: 4 * US,
            power_budget_ua: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("cannot provision {requested} pages on a device of {capacity}")]
    Provisioning { requested: u64, capacity: u64 },
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OpError {
    #[error("no slot matched the probe")]
    KeyNotFound,
    #[error("page unrecoverable after {retries} retries ({residual} bad bits left)")]
    ReadFailure { retries: u32, residual: usize },
    #[error(transparent)]
    Chip(#[from] ChipError),
    #[error("plane {plane} has no erased or reclaimable block left")]
    OutOfSpace { plane: u32 },
}

impl From<OutOfSpace> for OpError {
    fn from(e: OutOfSpace) -> Self {
        OpError::OutOfSpace { plane: e.plane }
    }
}

/// A point query's answer: which slots matched, and the selected chunks
/// (index, corrected contents) pulled from the value page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointResult {
    pub bitmap: MatchBitmap,
    pub chunks: Vec<(u8, [u8; CHUNK_BYTES])>,
}

/// One page's share of a scan: the combined slot set and the matching chunks
/// of that same page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageScanResult {
    pub logical: u64,
    pub slots: MatchBitmap,
    pub chunks: Vec<(u8, [u8; CHUNK_BYTES])>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OpOutcome {
    Point(Result<PointResult, OpError>),
    Read(Result<Vec<LogicalPage>, OpError>),
    Write(Result<(), OpError>),
    Scan(Result<Vec<PageScanResult>, OpError>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpCompletion {
    pub op_id: u64,
    pub at: SimTime,
    pub outcome: OpOutcome,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ControllerStats {
    pub searches: u64,
    /// Searches that shared their batch with at least one other search.
    pub merged_searches: u64,
    pub batches: u64,
    /// Opens whose verification burst failed and fell back to a full stream.
    pub verify_fallbacks: u64,
    pub stale_pages_seen: u64,
    pub refreshes: u64,
    pub programs: u64,
    pub erases: u64,
    pub ecc_retry_rounds: u64,
    /// Result bytes delivered to the host (bitmaps, chunks, whole pages).
    pub host_bytes: u64,
    /// Bytes that crossed any channel bus, including chip-internal traffic.
    pub bus_bytes: u64,
}

impl ControllerStats {
    pub fn merge_fraction(&self) -> f64 {
        if self.searches == 0 {
            0.0
        } else {
            self.merged_searches as f64 / self.searches as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum EventKind {
    StepEnd { sid: usize },
    Wake { sid: usize },
    /// A cached array read issued fire-and-forget has left the array.
    ArraySettled { sid: usize, current_ua: u64 },
    BatchDue { key_page: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Ev {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Blocked {
    No,
    Bus,
    Barrier,
}

/// Sessions with no owning flow (erases issued by the allocator).
const NO_FLOW: usize = usize::MAX;

struct Session {
    steps: VecDeque<Step>,
    flow: usize,
    die: u32,
    channel: u32,
    chip: u32,
    plane: u32,
    /// When the last fire-and-forget array read settles.
    array_done: SimTime,
    /// Array currents of reads issued but not yet settled.
    inflight_array: Vec<u64>,
    /// What this session currently holds against its chip's budget.
    claim_ua: u64,
    blocked: Blocked,
    wait_since: SimTime,
}

#[derive(Default)]
struct DieState {
    queue: VecDeque<usize>,
    running: Option<usize>,
}

#[derive(Default)]
struct ChannelState {
    holder: Option<usize>,
    waiters: VecDeque<usize>,
    busy_ns: SimTime,
}

struct PointOp {
    op_id: u64,
    probe: Probe,
    done: bool,
}

struct ScanPage {
    logical: u64,
    clean: bool,
    fallback: Option<LogicalPage>,
    result: Option<PageScanResult>,
}

enum ReadPurpose {
    Host { op_id: u64 },
    Refresh { logical: u64, source: PhysPageAddr },
}

enum Flow {
    Idle,
    Point {
        key_logical: u64,
        ops: Vec<PointOp>,
        bitmaps: Vec<Option<MatchBitmap>>,
        key_error: Option<OpError>,
        key_done: bool,
        value_sid: usize,
        sessions_left: u32,
    },
    Scan {
        op_id: u64,
        probes: Vec<Probe>,
        expr: CombineExpr,
        pages: Vec<ScanPage>,
        bitmaps: Vec<Option<MatchBitmap>>,
        /// Page indices each session still has barriers pending for.
        session_pages: BTreeMap<usize, VecDeque<usize>>,
        sessions_left: u32,
        error: Option<OpError>,
    },
    Read {
        purpose: ReadPurpose,
        images: Vec<Option<LogicalPage>>,
        session_page: BTreeMap<usize, usize>,
        sessions_left: u32,
        error: Option<OpError>,
    },
    Write {
        op_id: Option<u64>,
        logical: u64,
        image: LogicalPage,
        target: PhysPageAddr,
        /// For refresh rewrites: the address the image was read from. If the
        /// mapping moved meanwhile (a host write won the race), the install
        /// is abandoned rather than clobbering newer data.
        expect: Option<PhysPageAddr>,
    },
}

struct PoolEntry {
    value_logical: u64,
    ops: Vec<(u64, Probe)>,
}

enum BarrierAction {
    Hold,
    Release(Vec<Step>),
}

pub struct Engine {
    geometry: ChipGeometry,
    timings: TimingParams,
    currents: CurrentParams,
    params: ControllerParams,
    device: FlashDevice,
    ftl: Ftl,
    refresh: RefreshQueue,
    rng: ChaCha8Rng,
    now: SimTime,
    seq: u64,
    heap: BinaryHeap<Reverse<Ev>>,
    sessions: Vec<Session>,
    free_sessions: Vec<usize>,
    dies: Vec<DieState>,
    channels: Vec<ChannelState>,
    chip_inflight_ua: Vec<u64>,
    flows: Vec<Flow>,
    free_flows: Vec<usize>,
    pool: BTreeMap<u64, PoolEntry>,
    completions: VecDeque<OpCompletion>,
    next_op: u64,
    stats: ControllerStats,
    ledger: EnergyLedger,
    log: EventLog,
    finalized: bool,
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        geometry: ChipGeometry,
        timings: TimingParams,
        currents: CurrentParams,
        ecc: EccParams,
        randomizer: Randomizer,
        params: ControllerParams,
        provisioned: u64,
        seed: u64,
        log_events: bool,
    ) -> Result<Self, SetupError> {
        let device = FlashDevice::new(geometry, timings, randomizer, ecc)?;
        let capacity = geometry.total_pages();
        if provisioned > capacity {
            return Err(SetupError::Provisioning { requested: provisioned, capacity });
        }
        Ok(Engine {
            ftl: Ftl::new(geometry, provisioned),
            device,
            timings,
            currents,
            params,
            refresh: RefreshQueue::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            sessions: Vec::new(),
            free_sessions: Vec::new(),
            dies: (0..geometry.total_dies()).map(|_| DieState::default()).collect(),
            channels: (0..geometry.channels).map(|_| ChannelState::default()).collect(),
            chip_inflight_ua: vec![0; geometry.total_chips() as usize],
            flows: Vec::new(),
            free_flows: Vec::new(),
            pool: BTreeMap::new(),
            completions: VecDeque::new(),
            next_op: 0,
            stats: ControllerStats::default(),
            ledger: EnergyLedger::default(),
            log: EventLog::new(log_events),
            geometry,
            finalized: false,
        })
    }

    /// Preload a logical page outside simulated time: no session, no energy,
    /// no log. Meant for building the initial on-flash image.
    pub fn bulk_load_page(&mut self, logical: u64, payload: &[u8; PAGE_BYTES]) -> Result<(), OutOfRange> {
        let addr = self.ftl.resolve(logical)?;
        self.device
            .program_image(addr, payload, self.now)
            .expect("bulk load must target unwritten pages");
        Ok(())
    }

    /// Jump the clock forward over host think time. Only legal while idle.
    pub fn advance_clock(&mut self, to: SimTime) {
        assert!(self.heap.is_empty(), "clock jumps only apply to an idle engine");
        assert!(to >= self.now);
        self.now = to;
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stats(&self) -> &ControllerStats {
        &self.stats
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn device(&self) -> &FlashDevice {
        &self.device
    }

    /// Direct device access for fault injection.
    pub fn device_mut(&mut self) -> &mut FlashDevice {
        &mut self.device
    }

    pub fn ftl(&self) -> &Ftl {
        &self.ftl
    }

    pub fn geometry(&self) -> &ChipGeometry {
        &self.geometry
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn pending_refreshes(&self) -> usize {
        self.refresh.len()
    }

    pub fn chip_inflight_ua(&self, chip: u32) -> u64 {
        self.chip_inflight_ua[chip as usize]
    }

    pub fn is_idle(&self) -> bool {
        self.heap.is_empty()
    }

    fn alloc_op(&mut self) -> u64 {
        self.next_op += 1;
        self.next_op
    }

    fn alloc_flow(&mut self) -> usize {
        if let Some(fid) = self.free_flows.pop() {
            fid
        } else {
            self.flows.push(Flow::Idle);
            self.flows.len() - 1
        }
    }

    fn push_event(&mut self, at: SimTime, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Ev { at, seq: self.seq, kind }));
    }

    /// Submit a masked-equality search against a key page, with the paired
    /// value page opened in parallel for the chunk fetch.
    pub fn submit_point(
        &mut self,
        key_page: u64,
        value_page: u64,
        probe: Probe,
    ) -> Result<u64, OutOfRange> {
        self.ftl.resolve(key_page)?;
        self.ftl.resolve(value_page)?;
        let op_id = self.alloc_op();
        self.stats.searches += 1;
        match self.params.scheduler {
            SchedulerKind::Fcfs => {
                self.start_point_batch(key_page, value_page, vec![(op_id, probe)]);
            }
            SchedulerKind::Deadline => {
                let due = self.now + self.params.batch_deadline_ns;
                match self.pool.entry(key_page) {
                    btree_map::Entry::Occupied(mut e) => {
                        debug_assert_eq!(e.get().value_logical, value_page);
                        e.get_mut().ops.push((op_id, probe));
                    }
                    btree_map::Entry::Vacant(v) => {
                        v.insert(PoolEntry { value_logical: value_page, ops: vec![(op_id, probe)] });
                        self.push_event(due, EventKind::BatchDue { key_page });
                    }
                }
            }
        }
        Ok(op_id)
    }

    /// Whole-page reads, one session per page, results in submission order.
    pub fn submit_page_reads(&mut self, pages: &[u64]) -> Result<u64, OutOfRange> {
        for &p in pages {
            self.ftl.resolve(p)?;
        }
        let op_id = self.alloc_op();
        if pages.is_empty() {
            self.complete(op_id, OpOutcome::Read(Ok(Vec::new())));
            return Ok(op_id);
        }
        self.start_page_reads(ReadPurpose::Host { op_id }, pages);
        Ok(op_id)
    }

    pub fn submit_write(&mut self, logical: u64, image: LogicalPage) -> Result<u64, OutOfRange> {
        self.ftl.resolve(logical)?;
        let op_id = self.alloc_op();
        self.refresh.remove(logical);
        self.start_write(Some(op_id), logical, image, None);
        Ok(op_id)
    }

    /// Probe scan over data pages: every page is searched with all probes,
    /// per-page bitmaps are combined by `expr`, and matching chunks of the
    /// scanned page itself are gathered. Pages sharing a die run as one
    /// register-pipelined session.
    pub fn submit_scan(
        &mut self,
        pages: &[u64],
        probes: &[Probe],
        expr: CombineExpr,
    ) -> Result<u64, OutOfRange> {
        assert!(!probes.is_empty(), "a scan needs at least one probe");
        assert!(expr.probes_needed() <= probes.len());
        let mut addrs = Vec::with_capacity(pages.len());
        for &p in pages {
            addrs.push(self.ftl.resolve(p)?);
        }
        let op_id = self.alloc_op();
        if pages.is_empty() {
            self.complete(op_id, OpOutcome::Scan(Ok(Vec::new())));
            return Ok(op_id);
        }
        let mut by_die: BTreeMap<u32, Vec<(usize, PhysPageAddr)>> = BTreeMap::new();
        for (tag, &addr) in addrs.iter().enumerate() {
            by_die.entry(self.geometry.die_index(addr)).or_default().push((tag, addr));
        }
        let fid = self.alloc_flow();
        let mut session_pages = BTreeMap::new();
        let mut sessions_left = 0;
        for (_, group) in by_die {
            let sid = self.add_session(scan_steps(&group, probes), fid, group[0].1);
            session_pages.insert(sid, group.iter().map(|&(tag, _)| tag).collect());
            sessions_left += 1;
        }
        self.flows[fid] = Flow::Scan {
            op_id,
            probes: probes.to_vec(),
            expr,
            pages: pages
                .iter()
                .map(|&p| ScanPage { logical: p, clean: true, fallback: None, result: None })
                .collect(),
            bitmaps: vec![None; pages.len() * probes.len()],
            session_pages,
            sessions_left,
            error: None,
        };
        Ok(op_id)
    }

    /// Start read-plus-rewrite cycles for every page queued by stale-page
    /// detection. Returns how many were started.
    pub fn refresh_tick(&mut self) -> usize {
        let mut started = 0;
        while let Some(logical) = self.refresh.pop() {
            let source = self.ftl.resolve(logical).expect("queued refresh for unprovisioned page");
            self.start_page_reads(ReadPurpose::Refresh { logical, source }, &[logical]);
            started += 1;
        }
        started
    }

    fn fire_batch(&mut self, key_page: u64) {
        let entry = self.pool.remove(&key_page).expect("batch deadline fired twice");
        self.start_point_batch(key_page, entry.value_logical, entry.ops);
    }

    fn start_point_batch(&mut self, key_logical: u64, value_logical: u64, ops: Vec<(u64, Probe)>) {
        debug_assert!(!ops.is_empty());
        self.stats.batches += 1;
        if ops.len() >= 2 {
            self.stats.merged_searches += ops.len() as u64;
        }
        let key_addr = self.ftl.resolve(key_logical).expect("pooled key page vanished");
        let value_addr = self.ftl.resolve(value_logical).expect("pooled value page vanished");
        let probes: Vec<Probe> = ops.iter().map(|&(_, probe)| probe).collect();
        let fid = self.alloc_flow();
        self.add_session(point_key_steps(key_addr, &probes), fid, key_addr);
        let value_sid = self.add_session(point_value_steps(value_addr), fid, value_addr);
        self.flows[fid] = Flow::Point {
            key_logical,
            ops: ops
                .into_iter()
                .map(|(op_id, probe)| PointOp { op_id, probe, done: false })
                .collect(),
            bitmaps: vec![None; probes.len()],
            key_error: None,
            key_done: false,
            value_sid,
            sessions_left: 2,
        };
    }

    fn start_page_reads(&mut self, purpose: ReadPurpose, pages: &[u64]) {
        let addrs: Vec<PhysPageAddr> = pages
            .iter()
            .map(|&p| self.ftl.resolve(p).expect("read of unprovisioned page"))
            .collect();
        let fid = self.alloc_flow();
        let mut session_page = BTreeMap::new();
        for (i, &addr) in addrs.iter().enumerate() {
            let sid = self.add_session(page_stream_steps(addr, BusMode::Storage), fid, addr);
            session_page.insert(sid, i);
        }
        self.flows[fid] = Flow::Read {
            purpose,
            images: vec![None; pages.len()],
            session_page,
            sessions_left: pages.len() as u32,
            error: None,
        };
    }

    fn start_write(
        &mut self,
        op_id: Option<u64>,
        logical: u64,
        image: LogicalPage,
        expect: Option<PhysPageAddr>,
    ) {
        let reservation = match self.ftl.reserve_for(logical) {
            Ok(r) => r,
            Err(e) => {
                if let Some(id) = op_id {
                    self.complete(id, OpOutcome::Write(Err(e.into())));
                } else {
                    self.refresh.enqueue(logical);
                }
                return;
            }
        };
        let fid = self.alloc_flow();
        if let Some(block) = reservation.needs_erase {
            self.add_session(erase_steps(block), NO_FLOW, block.page(0));
        }
        self.add_session(program_steps(), fid, reservation.addr);
        self.flows[fid] = Flow::Write { op_id, logical, image, target: reservation.addr, expect };
    }

    fn add_session(&mut self, steps: VecDeque<Step>, flow: usize, addr: PhysPageAddr) -> usize {
        let die = self.geometry.die_index(addr);
        let session = Session {
            claim_ua: peak_array_ua(&steps, &self.currents),
            steps,
            flow,
            die,
            channel: addr.channel,
            chip: self.geometry.chip_of_die(die),
            plane: self.geometry.plane_index(addr),
            array_done: 0,
            inflight_array: Vec::new(),
            blocked: Blocked::No,
            wait_since: 0,
        };
        let sid = match self.free_sessions.pop() {
            Some(i) => {
                self.sessions[i] = session;
                i
            }
            None => {
                self.sessions.push(session);
                self.sessions.len() - 1
            }
        };
        self.dies[die as usize].queue.push_back(sid);
        self.try_dispatch(die);
        sid
    }

    /// Dispatch the die's next queued session if the die is free and the
    /// chip budget admits its peak draw. A claim that alone exceeds the
    /// budget is admitted when the chip is otherwise quiet, so undersized
    /// budgets degrade to serial operation instead of deadlock.
    fn try_dispatch(&mut self, die: u32) -> bool {
        if self.dies[die as usize].running.is_some() {
            return false;
        }
        let Some(&sid) = self.dies[die as usize].queue.front() else {
            return false;
        };
        let claim = self.sessions[sid].claim_ua;
        let chip = self.sessions[sid].chip as usize;
        if let Some(budget) = self.params.power_budget_ua {
            let inflight = self.chip_inflight_ua[chip];
            if inflight + claim > budget && inflight > 0 {
                return false;
            }
        }
        self.dies[die as usize].queue.pop_front();
        self.dies[die as usize].running = Some(sid);
        self.chip_inflight_ua[chip] += claim;
        self.advance(sid);
        true
    }

    /// Recompute a running session's claim after an array phase retired, and
    /// offer any released headroom to the chip's other dies.
    fn settle_claims(&mut self, sid: usize) {
        let s = &self.sessions[sid];
        let peak = peak_array_ua(&s.steps, &self.currents)
            .max(s.inflight_array.iter().copied().max().unwrap_or(0));
        let old = s.claim_ua;
        if peak >= old {
            return;
        }
        let chip = s.chip;
        self.sessions[sid].claim_ua = peak;
        self.chip_inflight_ua[chip as usize] -= old - peak;
        for die in 0..self.geometry.total_dies() {
            if self.geometry.chip_of_die(die) == chip {
                self.try_dispatch(die);
            }
        }
    }

    /// Run the session's cursor until it parks on a timed step, blocks, or
    /// finishes. Zero-duration structural steps are consumed inline.
    fn advance(&mut self, sid: usize) {
        loop {
            let Some(step) = self.sessions[sid].steps.front().cloned() else {
                self.finish_session(sid);
                return;
            };
            match step {
                Step::WaitArray => {
                    let done = self.sessions[sid].array_done;
                    self.sessions[sid].steps.pop_front();
                    if done > self.now {
                        self.push_event(done, EventKind::Wake { sid });
                        return;
                    }
                }
                Step::Barrier { tag } => match self.flow_barrier(sid, tag) {
                    BarrierAction::Hold => {
                        self.sessions[sid].blocked = Blocked::Barrier;
                        return;
                    }
                    BarrierAction::Release(splice) => {
                        self.sessions[sid].steps.pop_front();
                        for s in splice.into_iter().rev() {
                            self.sessions[sid].steps.push_front(s);
                        }
                    }
                },
                Step::Close => {
                    let plane = self.sessions[sid].plane;
                    self.device.close_page(plane).expect("close without an active page");
                    self.log_phase(sid, &step, self.now);
                    self.sessions[sid].steps.pop_front();
                }
                Step::ArrayRead { addr, cached: true } => {
                    let start = self.now.max(self.sessions[sid].array_done);
                    let end = start + self.timings.read_ns;
                    self.device
                        .load_into_register(addr)
                        .expect("cached read into a full register pair");
                    self.log_phase(sid, &step, start);
                    self.sessions[sid].array_done = end;
                    self.sessions[sid].inflight_array.push(self.currents.nand_read_ua);
                    self.sessions[sid].steps.pop_front();
                    self.push_event(
                        end,
                        EventKind::ArraySettled { sid, current_ua: self.currents.nand_read_ua },
                    );
                }
                _ if step.needs_bus() => {
                    if self.acquire_bus(sid) {
                        self.push_event(self.now + step.duration(&self.timings), EventKind::StepEnd { sid });
                    } else {
                        self.sessions[sid].blocked = Blocked::Bus;
                        self.sessions[sid].wait_since = self.now;
                    }
                    return;
                }
                _ => {
                    self.push_event(self.now + step.duration(&self.timings), EventKind::StepEnd { sid });
                    return;
                }
            }
        }
    }

    fn on_step_end(&mut self, sid: usize) {
        let step = self.sessions[sid].steps.pop_front().expect("step end on an empty session");
        let start = self.now - step.duration(&self.timings);
        match &step {
            Step::ArrayRead { addr, cached: false } => {
                self.device.load_into_register(*addr).expect("open into a full register pair");
                self.log_phase(sid, &step, start);
                self.settle_claims(sid);
            }
            Step::VerifyBurst => {
                self.log_phase(sid, &step, start);
                self.release_bus(sid);
                let plane = self.sessions[sid].plane;
                let loaded = self.device.active_page(plane).expect("verify without an active page");
                let verdict = self.device.verify_burst(loaded, self.now).verdict;
                self.flow_verify(sid, verdict);
            }
            Step::Match { op, probe } => {
                self.log_phase(sid, &step, start);
                let plane = self.sessions[sid].plane;
                let bitmap = self
                    .device
                    .active_search(plane, probe.key, probe.mask)
                    .expect("search without an active page");
                self.flow_match(sid, *op, bitmap);
            }
            Step::BitmapOut { op } => {
                self.log_phase(sid, &step, start);
                self.release_bus(sid);
                self.flow_bitmap_out(sid, *op);
            }
            Step::Gather { op, chunks } => {
                self.log_phase(sid, &step, start);
                self.release_bus(sid);
                let plane = self.sessions[sid].plane;
                let gathered = self.device.active_gather(plane, *chunks);
                self.flow_gather(sid, *op, *chunks, gathered);
            }
            Step::FullStream { .. } => {
                self.log_phase(sid, &step, start);
                self.release_bus(sid);
                let plane = self.sessions[sid].plane;
                let dump = self.device.active_full_dump(plane).expect("stream without an active page");
                self.flow_stream(sid, dump);
            }
            Step::DataIn => {
                self.log_phase(sid, &step, start);
                self.release_bus(sid);
            }
            Step::ProgramPulse => {
                self.log_phase(sid, &step, start);
                self.settle_claims(sid);
            }
            Step::ErasePulse { block } => {
                self.device.wipe_block(*block).expect("erase of an unreachable block");
                self.log_phase(sid, &step, start);
                self.stats.erases += 1;
                self.settle_claims(sid);
            }
            Step::WaitArray
            | Step::Barrier { .. }
            | Step::Close
            | Step::ArrayRead { cached: true, .. } => {
                unreachable!("structural and cached steps are consumed inline")
            }
        }
        self.advance(sid);
    }

    fn finish_session(&mut self, sid: usize) {
        debug_assert!(self.sessions[sid].inflight_array.is_empty());
        let die = self.sessions[sid].die;
        debug_assert_eq!(self.dies[die as usize].running, Some(sid));
        self.dies[die as usize].running = None;
        self.settle_claims(sid);
        let fid = self.sessions[sid].flow;
        self.sessions[sid].flow = NO_FLOW;
        self.free_sessions.push(sid);
        let pending_write = self.flow_session_done(fid);
        self.try_dispatch(die);
        if let Some((logical, image, source)) = pending_write {
            self.start_write(None, logical, image, Some(source));
        }
    }

    /// Account one retired phase: energy to the ledger, bus occupancy to the
    /// channel, and a log record when logging is on.
    fn log_phase(&mut self, sid: usize, step: &Step, start: SimTime) {
        let dur = step.duration(&self.timings);
        if let Some(category) = step.category() {
            self.ledger.add(category, category.rail_mv(&self.currents), step.current_ua(&self.currents), dur);
        }
        if step.needs_bus() {
            self.channels[self.sessions[sid].channel as usize].busy_ns += dur;
            self.stats.bus_bytes += step.bytes();
        }
        if let Some((command, phase)) = step.labels() {
            let s = &self.sessions[sid];
            self.log.push(EventRecord {
                time_ns: start,
                channel: s.channel,
                die: s.die,
                command,
                phase,
                current_ua: step.current_ua(&self.currents),
                bytes: step.bytes(),
                duration_ns: dur,
                category: step.category(),
            });
        }
    }

    fn acquire_bus(&mut self, sid: usize) -> bool {
        let ch = self.sessions[sid].channel as usize;
        match self.channels[ch].holder {
            None => {
                self.channels[ch].holder = Some(sid);
                true
            }
            Some(holder) => {
                debug_assert_ne!(holder, sid);
                self.channels[ch].waiters.push_back(sid);
                false
            }
        }
    }

    fn release_bus(&mut self, sid: usize) {
        let ch = self.sessions[sid].channel as usize;
        debug_assert_eq!(self.channels[ch].holder, Some(sid));
        self.channels[ch].holder = None;
        let Some(next) = self.channels[ch].waiters.pop_front() else {
            return;
        };
        self.channels[ch].holder = Some(next);
        debug_assert_eq!(self.sessions[next].blocked, Blocked::Bus);
        self.sessions[next].blocked = Blocked::No;
        let waited = self.now - self.sessions[next].wait_since;
        let step = self.sessions[next].steps.front().cloned().expect("bus waiter without a step");
        if waited > 0 {
            let (command, _) = step.labels().expect("bus steps always have labels");
            let s = &self.sessions[next];
            self.log.push(EventRecord {
                time_ns: s.wait_since,
                channel: s.channel,
                die: s.die,
                command,
                phase: "bus_wait",
                current_ua: 0,
                bytes: 0,
                duration_ns: waited,
                category: None,
            });
        }
        self.push_event(self.now + step.duration(&self.timings), EventKind::StepEnd { sid: next });
    }

    /// A verification burst came back bad: swap the remaining match rounds
    /// for a full-page stream over the search interface, and queue a refresh
    /// if the page was merely old.
    fn flow_verify(&mut self, sid: usize, verdict: OpenVerdict) {
        if verdict == OpenVerdict::Clean {
            return;
        }
        let fid = self.sessions[sid].flow;
        if fid == NO_FLOW {
            return;
        }
        self.stats.verify_fallbacks += 1;
        let logical = match &mut self.flows[fid] {
            Flow::Point { key_logical, .. } => *key_logical,
            Flow::Scan { pages, session_pages, .. } => {
                let &page = session_pages[&sid].front().expect("verify without a pending page");
                pages[page].clean = false;
                pages[page].logical
            }
            _ => unreachable!("verified opens occur only on key and scan sessions"),
        };
        if verdict == OpenVerdict::Stale {
            self.stats.stale_pages_seen += 1;
            self.refresh.enqueue(logical);
        }
        let steps = &mut self.sessions[sid].steps;
        while matches!(steps.front(), Some(Step::Match { .. } | Step::BitmapOut { .. })) {
            steps.pop_front();
        }
        steps.push_front(Step::FullStream { mode: BusMode::Match });
    }

    fn flow_match(&mut self, sid: usize, op: usize, bitmap: MatchBitmap) {
        let fid = self.sessions[sid].flow;
        if fid == NO_FLOW {
            return;
        }
        match &mut self.flows[fid] {
            Flow::Point { bitmaps, .. } | Flow::Scan { bitmaps, .. } => bitmaps[op] = Some(bitmap),
            _ => unreachable!("match steps belong to point or scan flows"),
        }
    }

    fn flow_bitmap_out(&mut self, sid: usize, op: usize) {
        let fid = self.sessions[sid].flow;
        if fid == NO_FLOW || !matches!(self.flows[fid], Flow::Point { .. }) {
            return;
        }
        let mut miss = None;
        let mut release = false;
        if let Flow::Point { ops, bitmaps, key_done, .. } = &mut self.flows[fid] {
            let bitmap = bitmaps[op].expect("bitmap transfer before its match");
            if bitmap.is_empty() && !ops[op].done {
                ops[op].done = true;
                miss = Some(ops[op].op_id);
            }
            if bitmaps.iter().all(Option::is_some) {
                *key_done = true;
                release = true;
            }
        }
        if let Some(op_id) = miss {
            self.complete(op_id, OpOutcome::Point(Err(OpError::KeyNotFound)));
        }
        if release {
            self.try_release_value(fid);
        }
    }

    fn flow_stream(&mut self, sid: usize, dump: crate::chip::RawPageDump) {
        let fid = self.sessions[sid].flow;
        if fid == NO_FLOW {
            return;
        }
        let ecc = *self.device.ecc();
        let randomizer = *self.device.randomizer();
        let corrected = correct_full_page(&dump, &ecc, &randomizer, &mut self.rng);
        if let Ok((_, retries)) = &corrected {
            self.stats.ecc_retry_rounds += u64::from(*retries);
        }
        let mut misses = Vec::new();
        let mut release = false;
        match &mut self.flows[fid] {
            Flow::Point { ops, bitmaps, key_error, key_done, .. } => {
                match corrected {
                    Ok((image, _)) => {
                        for (i, o) in ops.iter_mut().enumerate() {
                            let bitmap = match_page(&image, o.probe.key, o.probe.mask);
                            if bitmap.is_empty() && !o.done {
                                o.done = true;
                                misses.push(o.op_id);
                            }
                            bitmaps[i] = Some(bitmap);
                        }
                    }
                    Err(f) => {
                        *key_error =
                            Some(OpError::ReadFailure { retries: f.retries, residual: f.residual });
                    }
                }
                *key_done = true;
                release = true;
            }
            Flow::Scan { pages, session_pages, error, .. } => {
                let &page = session_pages[&sid].front().expect("stream without a pending page");
                match corrected {
                    Ok((image, _)) => pages[page].fallback = Some(image),
                    Err(f) => {
                        error.get_or_insert(OpError::ReadFailure {
                            retries: f.retries,
                            residual: f.residual,
                        });
                    }
                }
            }
            Flow::Read { images, session_page, error, .. } => {
                let idx = session_page[&sid];
                match corrected {
                    Ok((image, _)) => images[idx] = Some(image),
                    Err(f) => {
                        error.get_or_insert(OpError::ReadFailure {
                            retries: f.retries,
                            residual: f.residual,
                        });
                    }
                }
            }
            _ => unreachable!("full streams belong to point, scan, or read flows"),
        }
        for op_id in misses {
            self.complete(op_id, OpOutcome::Point(Err(OpError::KeyNotFound)));
        }
        if release {
            self.try_release_value(fid);
        }
    }

    fn flow_gather(
        &mut self,
        sid: usize,
        op: usize,
        chunks: ChunkBitmap,
        gathered: Result<(Vec<u8>, Vec<(u32, u32)>), ChipError>,
    ) {
        let fid = self.sessions[sid].flow;
        if fid == NO_FLOW {
            return;
        }
        let mut completion = None;
        match &mut self.flows[fid] {
            Flow::Point { ops, bitmaps, .. } => {
                ops[op].done = true;
                let outcome = match gathered {
                    Ok((bytes, _)) => Ok(PointResult {
                        bitmap: bitmaps[op].expect("gather before its bitmap"),
                        chunks: chunk_pairs(chunks, &bytes),
                    }),
                    Err(e) => Err(OpError::Chip(e)),
                };
                completion = Some((ops[op].op_id, OpOutcome::Point(outcome)));
            }
            Flow::Scan { pages, error, .. } => match gathered {
                Ok((bytes, _)) => {
                    let result = pages[op].result.as_mut().expect("gather before the page barrier");
                    result.chunks = chunk_pairs(chunks, &bytes);
                }
                Err(e) => {
                    error.get_or_insert(OpError::Chip(e));
                }
            },
            _ => unreachable!("gathers belong to point or scan flows"),
        }
        if let Some((op_id, outcome)) = completion {
            self.complete(op_id, outcome);
        }
    }

    fn flow_barrier(&mut self, sid: usize, tag: usize) -> BarrierAction {
        let fid = self.sessions[sid].flow;
        if fid == NO_FLOW {
            return BarrierAction::Release(Vec::new());
        }
        match &self.flows[fid] {
            Flow::Point { key_done, .. } => {
                if !key_done {
                    BarrierAction::Hold
                } else {
                    BarrierAction::Release(self.build_value_splice(fid))
                }
            }
            Flow::Scan { .. } => self.scan_barrier(fid, sid, tag),
            _ => unreachable!("barrier on a flow without one"),
        }
    }

    /// The value session reached its barrier, or the key side just finished:
    /// splice in one gather per still-open hit, then the close.
    fn try_release_value(&mut self, fid: usize) {
        let Flow::Point { value_sid, .. } = &self.flows[fid] else {
            return;
        };
        let value_sid = *value_sid;
        if self.sessions[value_sid].blocked != Blocked::Barrier {
            return;
        }
        debug_assert!(matches!(self.sessions[value_sid].steps.front(), Some(Step::Barrier { .. })));
        let splice = self.build_value_splice(fid);
        self.sessions[value_sid].steps.pop_front();
        for s in splice.into_iter().rev() {
            self.sessions[value_sid].steps.push_front(s);
        }
        self.sessions[value_sid].blocked = Blocked::No;
        self.push_event(self.now, EventKind::Wake { sid: value_sid });
    }

    fn build_value_splice(&self, fid: usize) -> Vec<Step> {
        let Flow::Point { ops, bitmaps, key_error, .. } = &self.flows[fid] else {
            unreachable!("value splices belong to point flows")
        };
        let mut splice = Vec::new();
        if key_error.is_none() {
            for (i, o) in ops.iter().enumerate() {
                if o.done {
                    continue;
                }
                let bitmap = bitmaps[i].expect("value released before bitmaps settled");
                debug_assert!(!bitmap.is_empty());
                splice.push(Step::Gather { op: i, chunks: slot_to_chunk_bitmap(&bitmap) });
            }
        }
        splice.push(Step::Close);
        splice
    }

    fn scan_barrier(&mut self, fid: usize, sid: usize, tag: usize) -> BarrierAction {
        let mut flow = mem::replace(&mut self.flows[fid], Flow::Idle);
        let mut splice = Vec::new();
        if let Flow::Scan { probes, expr, pages, bitmaps, session_pages, error, .. } = &mut flow {
            let page = session_pages
                .get_mut(&sid)
                .and_then(VecDeque::pop_front)
                .expect("barrier without a pending page");
            debug_assert_eq!(page, tag);
            let k = probes.len();
            let slot = &mut pages[page];
            if slot.clean {
                let per_probe: Vec<MatchBitmap> = bitmaps[page * k..(page + 1) * k]
                    .iter()
                    .map(|b| b.expect("barrier before bitmaps settled"))
                    .collect();
                let slots = expr.eval(&per_probe);
                slot.result =
                    Some(PageScanResult { logical: slot.logical, slots, chunks: Vec::new() });
                if !slots.is_empty() {
                    splice.push(Step::Gather { op: page, chunks: slot_to_chunk_bitmap(&slots) });
                }
            } else if let Some(image) = slot.fallback.take() {
                for (j, probe) in probes.iter().enumerate() {
                    bitmaps[page * k + j] = Some(match_page(&image, probe.key, probe.mask));
                }
                let per_probe: Vec<MatchBitmap> =
                    bitmaps[page * k..(page + 1) * k].iter().map(|b| b.unwrap()).collect();
                let slots = expr.eval(&per_probe);
                let chunks = slot_to_chunk_bitmap(&slots)
                    .iter_ones()
                    .map(|c| {
                        let at = c as usize * CHUNK_BYTES;
                        (c as u8, image[at..at + CHUNK_BYTES].try_into().unwrap())
                    })
                    .collect();
                slot.result = Some(PageScanResult { logical: slot.logical, slots, chunks });
            } else {
                debug_assert!(error.is_some(), "no image and no recorded failure");
            }
        }
        self.flows[fid] = flow;
        BarrierAction::Release(splice)
    }

    /// A session retired its last step. When its flow has no sessions left,
    /// assemble and deliver the flow's outcome. Returns a rewrite to start
    /// (refresh read flows hand their image straight to a program).
    fn flow_session_done(&mut self, fid: usize) -> Option<(u64, LogicalPage, PhysPageAddr)> {
        if fid == NO_FLOW {
            return None;
        }
        let finished = match &mut self.flows[fid] {
            Flow::Idle => false,
            Flow::Point { sessions_left, .. }
            | Flow::Scan { sessions_left, .. }
            | Flow::Read { sessions_left, .. } => {
                *sessions_left -= 1;
                *sessions_left == 0
            }
            Flow::Write { .. } => true,
        };
        if !finished {
            return None;
        }
        let flow = mem::replace(&mut self.flows[fid], Flow::Idle);
        self.free_flows.push(fid);
        match flow {
            Flow::Idle => None,
            Flow::Point { ops, key_error, .. } => {
                for o in ops {
                    if !o.done {
                        let e = key_error.clone().unwrap_or(OpError::KeyNotFound);
                        self.complete(o.op_id, OpOutcome::Point(Err(e)));
                    }
                }
                None
            }
            Flow::Scan { op_id, pages, error, .. } => {
                let outcome = match error {
                    Some(e) => Err(e),
                    None => Ok(pages
                        .into_iter()
                        .map(|p| p.result.expect("scan page left unresolved"))
                        .collect()),
                };
                self.complete(op_id, OpOutcome::Scan(outcome));
                None
            }
            Flow::Read { purpose, images, error, .. } => match purpose {
                ReadPurpose::Host { op_id } => {
                    let outcome = match error {
                        Some(e) => Err(e),
                        None => Ok(images
                            .into_iter()
                            .map(|i| i.expect("read page left unresolved"))
                            .collect()),
                    };
                    self.complete(op_id, OpOutcome::Read(outcome));
                    None
                }
                ReadPurpose::Refresh { logical, source } => {
                    if error.is_some() {
                        return None;
                    }
                    let image =
                        images.into_iter().next().flatten().expect("refresh image missing");
                    Some((logical, image, source))
                }
            },
            Flow::Write { op_id, logical, image, target, expect } => {
                if let Some(source) = expect {
                    if self.ftl.resolve(logical).ok() != Some(source) {
                        // A host write landed while the refresh was in
                        // flight; its data is newer, so drop ours.
                        self.ftl.abandon(target);
                        return None;
                    }
                }
                self.device
                    .program_image(target, &image, self.now)
                    .expect("program into an unerased page");
                let old = self.ftl.install(logical, target);
                self.device.retire_page(old).ok();
                self.stats.programs += 1;
                if expect.is_some() {
                    self.stats.refreshes += 1;
                }
                if let Some(id) = op_id {
                    self.complete(id, OpOutcome::Write(Ok(())));
                }
                None
            }
        }
    }

    fn complete(&mut self, op_id: u64, outcome: OpOutcome) {
        self.stats.host_bytes += host_bytes_of(&outcome);
        self.completions.push_back(OpCompletion { op_id, at: self.now, outcome });
    }

    fn step_event(&mut self) -> bool {
        let Some(Reverse(ev)) = self.heap.pop() else {
            return false;
        };
        debug_assert!(ev.at >= self.now);
        self.now = ev.at;
        match ev.kind {
            EventKind::StepEnd { sid } => self.on_step_end(sid),
            EventKind::Wake { sid } => self.advance(sid),
            EventKind::ArraySettled { sid, current_ua } => {
                let inflight = &mut self.sessions[sid].inflight_array;
                let at = inflight
                    .iter()
                    .position(|&c| c == current_ua)
                    .expect("settled read was not in flight");
                inflight.swap_remove(at);
                self.settle_claims(sid);
            }
            EventKind::BatchDue { key_page } => self.fire_batch(key_page),
        }
        true
    }

    /// Drain every scheduled event, including pooled batch deadlines.
    pub fn run_until_idle(&mut self) {
        while self.step_event() {}
    }

    pub fn poll_completion(&mut self) -> Option<OpCompletion> {
        self.completions.pop_front()
    }

    /// Advance time until some operation completes; `None` means the engine
    /// went idle with nothing outstanding.
    pub fn run_until_completion(&mut self) -> Option<OpCompletion> {
        loop {
            if let Some(c) = self.completions.pop_front() {
                return Some(c);
            }
            if !self.step_event() {
                return None;
            }
        }
    }

    /// Close the books on an idle engine: each channel's unoccupied time is
    /// charged at the idle rail draw and logged as one synthetic record.
    pub fn finalize(&mut self) {
        assert!(self.heap.is_empty(), "finalize applies to an idle engine");
        assert!(!self.finalized, "finalize runs once");
        self.finalized = true;
        let end = self.now;
        for ch in 0..self.channels.len() {
            let busy = self.channels[ch].busy_ns;
            debug_assert!(busy <= end);
            let idle = end - busy;
            if idle == 0 {
                continue;
            }
            self.ledger.add(EnergyCategory::BusIdle, self.currents.bus_mv, self.currents.bus_idle_ua, idle);
            self.log.push(EventRecord {
                time_ns: end,
                channel: ch as u32,
                die: 0,
                command: "bus",
                phase: "idle",
                current_ua: self.currents.bus_idle_ua,
                bytes: 0,
                duration_ns: idle,
                category: Some(EnergyCategory::BusIdle),
            });
        }
    }
}

fn chunk_pairs(chunks: ChunkBitmap, bytes: &[u8]) -> Vec<(u8, [u8; CHUNK_BYTES])> {
    chunks
        .iter_ones()
        .zip(bytes.chunks_exact(CHUNK_BYTES))
        .map(|(c, b)| (c as u8, b.try_into().unwrap()))
        .collect()
}

fn host_bytes_of(outcome: &OpOutcome) -> u64 {
    match outcome {
        OpOutcome::Point(Ok(r)) => (MatchBitmap::BYTES + r.chunks.len() * CHUNK_BYTES) as u64,
        OpOutcome::Point(Err(OpError::KeyNotFound)) => MatchBitmap::BYTES as u64,
        OpOutcome::Read(Ok(pages)) => (pages.len() * PAGE_BYTES) as u64,
        OpOutcome::Scan(Ok(pages)) => pages
            .iter()
            .map(|p| (MatchBitmap::BYTES + p.chunks.len() * CHUNK_BYTES) as u64)
            .sum(),
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::{SLOTS_PER_PAGE, SLOT_BYTES};

    fn key_page_payload(base: u64) -> Box<[u8; PAGE_BYTES]> {
        let mut p = Box::new([0u8; PAGE_BYTES]);
        for slot in 0..SLOTS_PER_PAGE {
            let v = (base + slot as u64).to_be_bytes();
            p[slot * SLOT_BYTES..(slot + 1) * SLOT_BYTES].copy_from_slice(&v);
        }
        p
    }

    fn value_page_payload(tag: u8) -> Box<[u8; PAGE_BYTES]> {
        let mut p = Box::new([0u8; PAGE_BYTES]);
        for (i, b) in p.iter_mut().enumerate() {
            *b = tag ^ (i as u8).wrapping_mul(31);
        }
        p
    }

    fn engine_with(params: ControllerParams, ecc: EccParams, provisioned: u64) -> Engine {
        Engine::new(
            ChipGeometry::default(),
            TimingParams::default(),
            CurrentParams::default(),
            ecc,
            Randomizer::default(),
            params,
            provisioned,
            7,
            true,
        )
        .unwrap()
    }

    fn default_engine() -> Engine {
        engine_with(ControllerParams::default(), EccParams::default(), 64)
    }

    const FULL: u64 = u64::MAX;

    #[test]
    fn clean_point_query_completes_at_exact_latency() {
        let mut e = default_engine();
        let value = value_page_payload(9);
        e.bulk_load_page(0, &key_page_payload(5_000)).unwrap();
        e.bulk_load_page(1, &value).unwrap();
        let op = e.submit_point(0, 1, Probe { key: 5_037, mask: FULL }).unwrap();
        let done = e.run_until_completion().unwrap();
        assert_eq!(done.op_id, op);
        assert_eq!(done.at, 21_103);
        let OpOutcome::Point(Ok(r)) = done.outcome else { panic!("expected a hit") };
        assert!(r.bitmap.get(37));
        assert_eq!(r.bitmap.count_ones(), 1);
        assert_eq!(r.chunks.len(), 1);
        assert_eq!(r.chunks[0].0, 4);
        assert_eq!(r.chunks[0].1[..], value[4 * CHUNK_BYTES..5 * CHUNK_BYTES]);
        e.run_until_idle();
        assert_eq!(e.log().recompute_bytes(), 256 + 64 + 64);
        assert_eq!(e.stats().host_bytes, 128);
        assert!(e.log().records().iter().all(|r| r.command != "full_read"));
    }

    #[test]
    fn missing_key_reports_not_found_at_bitmap_time() {
        let mut e = default_engine();
        e.bulk_load_page(0, &key_page_payload(5_000)).unwrap();
        e.bulk_load_page(1, &value_page_payload(9)).unwrap();
        let op = e.submit_point(0, 1, Probe { key: 99_999, mask: FULL }).unwrap();
        let done = e.run_until_completion().unwrap();
        assert_eq!((done.op_id, done.at), (op, 20_303));
        assert_eq!(done.outcome, OpOutcome::Point(Err(OpError::KeyNotFound)));
        e.run_until_idle();
        assert!(e.log().records().iter().all(|r| r.command != "gather"));
        assert_eq!(e.stats().host_bytes, 64);
    }

    #[test]
    fn batched_searches_share_one_open() {
        let params =
            ControllerParams { scheduler: SchedulerKind::Deadline, ..Default::default() };
        let mut e = engine_with(params, EccParams::default(), 64);
        e.bulk_load_page(0, &key_page_payload(5_000)).unwrap();
        e.bulk_load_page(1, &value_page_payload(9)).unwrap();
        for key in [5_010, 5_100, 5_200] {
            e.submit_point(0, 1, Probe { key, mask: FULL }).unwrap();
        }
        e.run_until_idle();
        let mut ats = Vec::new();
        while let Some(c) = e.poll_completion() {
            assert!(matches!(c.outcome, OpOutcome::Point(Ok(_))));
            ats.push(c.at);
        }
        // one key open + one value open at t = 4 us, three match rounds,
        // then the gathers drain back-to-back on the value channel
        assert_eq!(ats, vec![27_309, 28_109, 28_909]);
        let opens =
            e.log().records().iter().filter(|r| r.phase == "array_read").count();
        let matches =
            e.log().records().iter().filter(|r| r.phase == "match").count();
        assert_eq!((opens, matches), (2, 3));
        assert_eq!(e.stats().searches, 3);
        assert_eq!(e.stats().batches, 1);
        assert_eq!(e.stats().merged_searches, 3);
    }

    #[test]
    fn lone_search_waits_out_the_full_deadline() {
        let params =
            ControllerParams { scheduler: SchedulerKind::Deadline, ..Default::default() };
        let mut e = engine_with(params, EccParams::default(), 64);
        e.bulk_load_page(0, &key_page_payload(5_000)).unwrap();
        e.bulk_load_page(1, &value_page_payload(9)).unwrap();
        e.submit_point(0, 1, Probe { key: 5_037, mask: FULL }).unwrap();
        let done = e.run_until_completion().unwrap();
        assert_eq!(done.at, 4_000 + 21_103);
        assert_eq!(e.stats().merged_searches, 0);
    }

    #[test]
    fn shared_channel_serializes_streams_and_logs_the_wait() {
        let mut e = default_engine();
        let (a, b) = (value_page_payload(1), value_page_payload(2));
        e.bulk_load_page(0, &a).unwrap();
        e.bulk_load_page(8, &b).unwrap();
        let first = e.submit_page_reads(&[0]).unwrap();
        let second = e.submit_page_reads(&[8]).unwrap();
        e.run_until_idle();
        let c1 = e.poll_completion().unwrap();
        let c2 = e.poll_completion().unwrap();
        assert_eq!((c1.op_id, c1.at), (first, 21_120));
        assert_eq!((c2.op_id, c2.at), (second, 26_240));
        assert_eq!(c1.outcome, OpOutcome::Read(Ok(vec![a])));
        assert_eq!(c2.outcome, OpOutcome::Read(Ok(vec![b])));
        let wait: Vec<_> =
            e.log().records().iter().filter(|r| r.phase == "bus_wait").collect();
        assert_eq!(wait.len(), 1);
        assert_eq!((wait[0].command, wait[0].duration_ns, wait[0].time_ns), ("full_read", 5_120, 16_000));
    }

    #[test]
    fn power_budget_staggers_array_reads_on_one_chip() {
        let params = ControllerParams { power_budget_ua: Some(25_000), ..Default::default() };
        let mut e = engine_with(params, EccParams::default(), 64);
        e.bulk_load_page(0, &value_page_payload(1)).unwrap();
        e.bulk_load_page(8, &value_page_payload(2)).unwrap();
        e.submit_page_reads(&[0]).unwrap();
        e.submit_page_reads(&[8]).unwrap();
        e.run_until_idle();
        let c1 = e.poll_completion().unwrap();
        let c2 = e.poll_completion().unwrap();
        // the second array read starts only once the first one's current
        // retires, but its transfer then finds the bus free immediately
        assert_eq!((c1.at, c2.at), (21_120, 37_120));
        assert!(e.log().records().iter().all(|r| r.phase != "bus_wait"));
        assert_eq!(e.chip_inflight_ua(0), 0);
    }

    #[test]
    fn corrupt_verification_falls_back_and_still_answers() {
        let mut clean = default_engine();
        let mut e = default_engine();
        for engine in [&mut clean, &mut e] {
            engine.bulk_load_page(0, &key_page_payload(5_000)).unwrap();
            engine.bulk_load_page(1, &value_page_payload(9)).unwrap();
        }
        let addr = e.ftl().resolve(0).unwrap();
        let hits: Vec<u32> = (0..40).map(|i| i * 12).collect();
        e.device_mut().inject_errors(addr, &hits).unwrap();
        let probe = Probe { key: 5_037, mask: FULL };
        let want = clean.run_one(probe);
        let op = e.submit_point(0, 1, probe).unwrap();
        let done = e.run_until_completion().unwrap();
        assert_eq!(done.op_id, op);
        assert_eq!(done.at, 71_200);
        assert_eq!(done.outcome, want.outcome);
        e.run_until_idle();
        assert_eq!(e.stats().verify_fallbacks, 1);
        assert_eq!(e.stats().ecc_retry_rounds, 0);
        let streams: Vec<_> =
            e.log().records().iter().filter(|r| r.command == "full_read").collect();
        assert_eq!(streams.len(), 1);
        assert_eq!((streams[0].bytes, streams[0].duration_ns), (4_096, 51_200));
    }

    impl Engine {
        fn run_one(&mut self, probe: Probe) -> OpCompletion {
            self.submit_point(0, 1, probe).unwrap();
            let done = self.run_until_completion().unwrap();
            self.run_until_idle();
            done
        }
    }

    #[test]
    fn stale_page_is_refreshed_and_reads_clean_after() {
        let ecc = EccParams { age_margin_ns: 1_000_000, ..Default::default() };
        let mut e = engine_with(ControllerParams::default(), ecc, 64);
        e.bulk_load_page(0, &key_page_payload(5_000)).unwrap();
        e.bulk_load_page(1, &value_page_payload(9)).unwrap();
        e.advance_clock(5_000_000);
        let probe = Probe { key: 5_037, mask: FULL };
        let home = e.ftl().resolve(0).unwrap();

        let first = e.run_one(probe);
        assert!(matches!(first.outcome, OpOutcome::Point(Ok(_))));
        assert_eq!(e.stats().stale_pages_seen, 1);
        assert_eq!(e.pending_refreshes(), 1);

        assert_eq!(e.refresh_tick(), 1);
        e.run_until_idle();
        assert_ne!(e.ftl().resolve(0).unwrap(), home);
        assert_eq!(e.stats().refreshes, 1);

        let second = e.run_one(probe);
        assert_eq!(second.outcome, first.outcome);
        assert_eq!(e.stats().verify_fallbacks, 1, "refreshed page must open clean");
    }

    #[test]
    fn rewrites_reclaim_fully_stale_blocks() {
        let geometry = ChipGeometry {
            channels: 1,
            dies_per_package: 1,
            blocks_per_plane: 2,
            pages_per_block: 4,
            ..Default::default()
        };
        let mut e = Engine::new(
            geometry,
            TimingParams::default(),
            CurrentParams::default(),
            EccParams::default(),
            Randomizer::default(),
            ControllerParams::default(),
            1,
            7,
            true,
        )
        .unwrap();
        e.bulk_load_page(0, &value_page_payload(0)).unwrap();
        let mut last = value_page_payload(0);
        for round in 1..=8 {
            last = value_page_payload(round);
            let op = e.submit_write(0, last.clone()).unwrap();
            let done = e.run_until_completion().unwrap();
            assert_eq!((done.op_id, done.outcome), (op, OpOutcome::Write(Ok(()))));
        }
        assert_eq!(e.stats().programs, 8);
        assert_eq!(e.stats().erases, 1, "the eighth rewrite must reclaim block 0");
        let read = e.submit_page_reads(&[0]).unwrap();
        let done = e.run_until_completion().unwrap();
        assert_eq!((done.op_id, done.outcome), (read, OpOutcome::Read(Ok(vec![last]))));
    }

    #[test]
    fn ledger_matches_log_and_engine_quiesces() {
        let mut e = default_engine();
        e.bulk_load_page(0, &key_page_payload(5_000)).unwrap();
        e.bulk_load_page(1, &value_page_payload(9)).unwrap();
        e.submit_point(0, 1, Probe { key: 5_037, mask: FULL }).unwrap();
        e.submit_page_reads(&[2]).unwrap();
        e.submit_write(3, value_page_payload(4)).unwrap();
        e.run_until_idle();
        e.finalize();
        assert!(e.is_idle());
        assert_eq!(*e.ledger(), e.log().recompute_energy(&CurrentParams::default()));
        for plane in 0..e.geometry().total_planes() {
            let regs = e.device().registers(plane);
            assert!(regs.active.is_none() && regs.pending.is_none());
        }
    }

    #[test]
    fn same_die_scan_pipelines_the_next_page_behind_the_bus() {
        let geometry = ChipGeometry {
            channels: 1,
            dies_per_package: 1,
            ..Default::default()
        };
        let mut e = Engine::new(
            geometry,
            TimingParams::default(),
            CurrentParams::default(),
            EccParams::default(),
            Randomizer::default(),
            ControllerParams::default(),
            8,
            7,
            true,
        )
        .unwrap();
        let page0 = key_page_payload(100);
        e.bulk_load_page(0, &page0).unwrap();
        e.bulk_load_page(1, &key_page_payload(2_000)).unwrap();
        let op = e
            .submit_scan(&[0, 1], &[Probe { key: 137, mask: FULL }], CombineExpr::probe(0))
            .unwrap();
        e.run_until_idle();
        let done = e.poll_completion().unwrap();
        assert_eq!(done.op_id, op);
        let OpOutcome::Scan(Ok(results)) = done.outcome else { panic!("scan failed") };
        assert_eq!(results.len(), 2);
        assert!(results[0].slots.get(37));
        assert_eq!(results[0].chunks.len(), 1);
        assert_eq!(results[0].chunks[0].1[..], page0[4 * CHUNK_BYTES..5 * CHUNK_BYTES]);
        assert!(results[1].slots.is_empty());

        let cached: Vec<_> =
            e.log().records().iter().filter(|r| r.command == "open_cache").collect();
        assert_eq!(cached.len(), 1);
        assert_eq!(cached[0].time_ns, 20_303);
        let verifies: Vec<SimTime> = e
            .log()
            .records()
            .iter()
            .filter(|r| r.phase == "verify_out")
            .map(|r| r.time_ns)
            .collect();
        assert_eq!(verifies, vec![16_000, 36_303]);
    }
}

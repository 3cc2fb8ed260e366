//! The key-value store layered on the simulated device, with both access
//! paths behind one interface.
//!
//! Reads on the baseline path are demand-paged pointer chasing: the key
//! page is faulted in and scanned before the value page is dereferenced, so
//! a cold lookup costs two dependent page reads. Reads on the on-chip path
//! send a single search and never populate the cache, which leaves the
//! whole cache to act as a write buffer.
//!
//! Puts differ in what a dirty frame holds. The baseline cache is a page
//! cache: updating a page that is not resident faults the full value page
//! in synchronously and modifies it in place, so reads and updates compete
//! for the same frames. The on-chip path keeps the cache as a pure write
//! buffer of bare slot updates with no immediate I/O; the base page is
//! fetched only when the frame is flushed. Either way, evicting a dirty
//! frame programs the page asynchronously (sparse frames read and merge
//! their base first), and a bounded number of writebacks may be in
//! flight; beyond that, new evictions stall until the oldest completes.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{PAGE_BYTES, SLOTS_PER_CHUNK, SLOT_BYTES};
use crate::controller::{Engine, OpCompletion, OpError, OpOutcome, OutOfRange, Probe};
use crate::reliability::LogicalPage;

use super::cache::{Evicted, Frame, FrameData, PageCache};
use super::layout::{scan_key_page, slot_value, Record, TopLevelIndex, KEY_PAD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Sim,
}

#[derive(Clone, Copy, Debug)]
pub struct StoreParams {
    pub mode: Mode,
    pub cache_frames: usize,
    /// Maximum writebacks in flight before evictions stall.
    pub writeback_window: usize,
}

impl StoreParams {
    pub fn new(mode: Mode, cache_frames: usize) -> Self {
        StoreParams {
            mode,
            cache_frames,
            writeback_window: 32,
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("key is not present in the store")]
    KeyNotFound,
    #[error(transparent)]
    Device(OpError),
}

#[derive(Debug, Error)]
pub enum OpenError {
    #[error("leaf pages exceed the provisioned logical space")]
    OutOfRange(#[from] OutOfRange),
    #[error("records must be sorted by strictly increasing key below the padding sentinel")]
    BadRecords,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    pub gets: u64,
    pub puts: u64,
    /// Gets answered from a cache frame or an in-flight writeback image.
    pub served_in_host: u64,
    pub puts_buffered: u64,
    pub puts_written_through: u64,
    pub writebacks: u64,
    pub writeback_failures: u64,
}

enum WbState {
    AwaitRead(BTreeMap<u16, [u8; SLOT_BYTES]>),
    AwaitProgram(LogicalPage),
}

pub struct Store {
    engine: Engine,
    index: TopLevelIndex,
    cache: PageCache,
    mode: Mode,
    window: usize,
    /// Every leaf holds consecutive keys, making slot arithmetic valid.
    consecutive_leaves: bool,
    wb: HashMap<u64, WbState>,
    wb_by_op: HashMap<u64, u64>,
    wb_order: VecDeque<u64>,
    stats: StoreStats,
}

impl Store {
    /// Bulk-load sorted records into leaf pages and open the store over
    /// them. Loading happens outside simulated time.
    pub fn open(
        mut engine: Engine,
        records: impl IntoIterator<Item = Record>,
        params: StoreParams,
    ) -> Result<Self, OpenError> {
        let mut first_keys = Vec::new();
        let mut consecutive = true;
        let mut keys: Box<[u8; PAGE_BYTES]> = Box::new([0xFF; PAGE_BYTES]);
        let mut values: Box<[u8; PAGE_BYTES]> = Box::new([0; PAGE_BYTES]);
        let mut slot = 0usize;
        let mut prev: Option<u64> = None;
        let mut leaf = 0u64;
        let flush =
            |engine: &mut Engine, leaf: u64, keys: &mut Box<[u8; PAGE_BYTES]>, values: &mut Box<[u8; PAGE_BYTES]>| {
                engine.bulk_load_page(2 * leaf, keys)?;
                engine.bulk_load_page(2 * leaf + 1, values)?;
                keys.fill(0xFF);
                values.fill(0);
                Ok::<(), OutOfRange>(())
            };
        for rec in records {
            if prev.is_some_and(|p| p >= rec.key) || rec.key == KEY_PAD {
                return Err(OpenError::BadRecords);
            }
            if slot == 0 {
                first_keys.push(rec.key);
            } else if rec.key != prev.unwrap() + 1 {
                consecutive = false;
            }
            prev = Some(rec.key);
            let off = slot * SLOT_BYTES;
            keys[off..off + SLOT_BYTES].copy_from_slice(&rec.key.to_be_bytes());
            values[off..off + SLOT_BYTES].copy_from_slice(&rec.value.to_be_bytes());
            slot += 1;
            if slot == PAGE_BYTES / SLOT_BYTES {
                flush(&mut engine, leaf, &mut keys, &mut values)?;
                slot = 0;
                leaf += 1;
            }
        }
        if slot > 0 {
            flush(&mut engine, leaf, &mut keys, &mut values)?;
        }
        Ok(Store {
            engine,
            index: TopLevelIndex::from_first_keys(first_keys),
            cache: PageCache::new(params.cache_frames),
            mode: params.mode,
            window: params.writeback_window.max(1),
            consecutive_leaves: consecutive,
            wb: HashMap::new(),
            wb_by_op: HashMap::new(),
            wb_order: VecDeque::new(),
            stats: StoreStats::default(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stats(&self) -> &StoreStats {
        &self.stats
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    pub fn resident_frames(&self) -> usize {
        self.cache.len()
    }

    /// Look up a key on whichever path the store was opened with.
    pub fn get(&mut self, key: u64) -> Result<u64, StoreError> {
        match self.mode {
            Mode::Baseline => self.baseline_get(key),
            Mode::Sim => self.sim_get(key),
        }
    }

    /// Demand-paged lookup: fault in the key page, scan it for the slot,
    /// then fault in the value page. Both reads populate the cache.
    pub fn baseline_get(&mut self, key: u64) -> Result<u64, StoreError> {
        self.stats.gets += 1;
        let pair = self.index.locate(key).ok_or(StoreError::KeyNotFound)?;
        let (kp, vp) = (pair.key_page, pair.value_page);

        let kp_scan = match self.cache.get(kp) {
            Some(frame) => match &frame.data {
                FrameData::Full(image) => Some(scan_key_page(image, key)),
                FrameData::Sparse(_) => None,
            },
            None => None,
        };
        let slot = match kp_scan {
            Some(Some(slot)) => slot,
            Some(None) => return Err(StoreError::KeyNotFound),
            None => {
                let image = self.read_one(kp)?;
                let found = scan_key_page(&image, key);
                self.install_clean(kp, image);
                found.ok_or(StoreError::KeyNotFound)?
            }
        };

        if let Some(frame) = self.cache.get_mut(vp) {
            if let Some(bytes) = frame.data.slot(slot) {
                self.stats.served_in_host += 1;
                return Ok(u64::from_be_bytes(bytes));
            }
        }
        if let Some(bytes) = self.wb_slot(vp, slot) {
            self.stats.served_in_host += 1;
            return Ok(u64::from_be_bytes(bytes));
        }

        let base = self.current_base(vp)?;
        let bytes = match self.cache.get_mut(vp) {
            Some(frame) => {
                frame.data.merge_base(&base);
                frame.data.slot(slot).unwrap()
            }
            None => {
                let bytes = base[slot * SLOT_BYTES..(slot + 1) * SLOT_BYTES]
                    .try_into()
                    .unwrap();
                self.install_clean(vp, base);
                bytes
            }
        };
        Ok(u64::from_be_bytes(bytes))
    }

    /// On-chip lookup: serve from the write buffer when the key's slot is
    /// buffered, otherwise send a search. The cache is never touched.
    pub fn sim_get(&mut self, key: u64) -> Result<u64, StoreError> {
        self.stats.gets += 1;
        if key == KEY_PAD {
            return Err(StoreError::KeyNotFound);
        }
        let pair = self.index.locate(key).ok_or(StoreError::KeyNotFound)?;
        let (kp, vp) = (pair.key_page, pair.value_page);

        if let Some(slot) = self.arithmetic_slot(key, pair.slot_base) {
            if let Some(frame) = self.cache.peek(vp) {
                if let Some(bytes) = frame.data.slot(slot) {
                    self.stats.served_in_host += 1;
                    return Ok(u64::from_be_bytes(bytes));
                }
            }
            if let Some(bytes) = self.wb_slot(vp, slot) {
                self.stats.served_in_host += 1;
                return Ok(u64::from_be_bytes(bytes));
            }
        }

        let op = self
            .engine
            .submit_point(kp, vp, Probe { key, mask: u64::MAX })
            .expect("leaf pages are provisioned");
        let completion = self.wait_for(op);
        let result = match completion.outcome {
            OpOutcome::Point(r) => r,
            other => unreachable!("point op completed as {other:?}"),
        };
        match result {
            Ok(point) => {
                let slot = point
                    .bitmap
                    .iter_ones()
                    .next()
                    .expect("a successful point lookup names a slot");
                let chunk_id = (slot / SLOTS_PER_CHUNK) as u8;
                let chunk = point
                    .chunks
                    .iter()
                    .find(|(id, _)| *id == chunk_id)
                    .map(|(_, data)| data)
                    .expect("the matched slot's chunk is gathered");
                let off = (slot % SLOTS_PER_CHUNK) * SLOT_BYTES;
                Ok(u64::from_be_bytes(
                    chunk[off..off + SLOT_BYTES].try_into().unwrap(),
                ))
            }
            Err(OpError::KeyNotFound) => Err(StoreError::KeyNotFound),
            Err(e) => Err(StoreError::Device(e)),
        }
    }

    /// Update an existing key. With the page resident the slot is patched
    /// in place on either path. On a miss the paths part ways: the
    /// baseline faults the value page in before dirtying it, the on-chip
    /// path buffers the bare slot with no I/O at all. With no cache the
    /// update is written through synchronously.
    pub fn put(&mut self, key: u64, value: u64) -> Result<(), StoreError> {
        self.stats.puts += 1;
        assert!(
            self.consecutive_leaves,
            "puts need leaves with consecutive keys for slot arithmetic"
        );
        let pair = self
            .index
            .locate(key)
            .expect("puts only update indexed keys");
        let slot = self
            .arithmetic_slot(key, pair.slot_base)
            .expect("puts only update indexed keys");
        let vp = pair.value_page;

        if let Some(frame) = self.cache.get_mut(vp) {
            frame.data.set_slot(slot, value.to_be_bytes());
            frame.dirty = true;
            self.stats.puts_buffered += 1;
            return Ok(());
        }
        if self.cache.capacity() == 0 {
            return self.write_through(vp, slot, value);
        }
        let frame = match self.mode {
            Mode::Baseline => {
                let mut image = self.current_base(vp)?;
                let off = slot * SLOT_BYTES;
                image[off..off + SLOT_BYTES].copy_from_slice(&value.to_be_bytes());
                Frame { data: FrameData::Full(image), dirty: true }
            }
            Mode::Sim => {
                let mut deltas = BTreeMap::new();
                deltas.insert(slot as u16, value.to_be_bytes());
                Frame { data: FrameData::Sparse(deltas), dirty: true }
            }
        };
        let victim = self.cache.insert(vp, frame);
        self.stats.puts_buffered += 1;
        if let Some(victim) = victim {
            self.handle_evicted(victim)?;
        }
        Ok(())
    }

    /// Read the full value page covering `key`. The baseline serves and
    /// populates the cache; the on-chip path streams the page without
    /// caching it.
    pub fn read_page(&mut self, key: u64) -> Result<Box<[u8; PAGE_BYTES]>, StoreError> {
        self.stats.gets += 1;
        let pair = self.index.locate(key).ok_or(StoreError::KeyNotFound)?;
        let vp = pair.value_page;
        match self.mode {
            Mode::Baseline => {
                if let Some(frame) = self.cache.get(vp) {
                    if let FrameData::Full(image) = &frame.data {
                        self.stats.served_in_host += 1;
                        return Ok(image.clone());
                    }
                }
                let base = self.current_base(vp)?;
                match self.cache.get_mut(vp) {
                    Some(frame) => {
                        frame.data.merge_base(&base);
                        match &frame.data {
                            FrameData::Full(image) => Ok(image.clone()),
                            FrameData::Sparse(_) => unreachable!("merge produces a full frame"),
                        }
                    }
                    None => {
                        let copy = base.clone();
                        self.install_clean(vp, base);
                        Ok(copy)
                    }
                }
            }
            Mode::Sim => {
                let mut base = match self.cache.peek(vp) {
                    Some(Frame {
                        data: FrameData::Full(image),
                        ..
                    }) => image.clone(),
                    _ => self.current_base(vp)?,
                };
                if let Some(Frame {
                    data: FrameData::Sparse(deltas),
                    ..
                }) = self.cache.peek(vp)
                {
                    for (&slot, bytes) in deltas {
                        let off = slot as usize * SLOT_BYTES;
                        base[off..off + SLOT_BYTES].copy_from_slice(bytes);
                    }
                }
                Ok(base)
            }
        }
    }

    /// Wait until every in-flight writeback has been programmed and the
    /// device is idle. Dirty frames still resident stay where they are.
    pub fn drain(&mut self) {
        while let Some(completion) = self.engine.run_until_completion() {
            self.absorb(completion);
        }
        self.engine.run_until_idle();
    }

    fn arithmetic_slot(&self, key: u64, slot_base: u64) -> Option<usize> {
        if !self.consecutive_leaves {
            return None;
        }
        let slot = (key - slot_base) as usize;
        (slot < PAGE_BYTES / SLOT_BYTES).then_some(slot)
    }

    /// The page's current content as the host would reconstruct it: an
    /// in-flight writeback image if one exists, otherwise a device read
    /// overlaid with any writeback deltas still awaiting their base.
    fn current_base(&mut self, page: u64) -> Result<Box<[u8; PAGE_BYTES]>, StoreError> {
        if let Some(WbState::AwaitProgram(image)) = self.wb.get(&page) {
            self.stats.served_in_host += 1;
            return Ok(image.clone());
        }
        let mut image = self.read_one(page)?;
        if let Some(WbState::AwaitRead(deltas)) = self.wb.get(&page) {
            for (&slot, bytes) in deltas {
                let off = slot as usize * SLOT_BYTES;
                image[off..off + SLOT_BYTES].copy_from_slice(bytes);
            }
        }
        Ok(image)
    }

    fn read_one(&mut self, page: u64) -> Result<Box<[u8; PAGE_BYTES]>, StoreError> {
        let op = self
            .engine
            .submit_page_reads(&[page])
            .expect("leaf pages are provisioned");
        let completion = self.wait_for(op);
        match completion.outcome {
            OpOutcome::Read(Ok(mut images)) => Ok(images.pop().expect("one page requested")),
            OpOutcome::Read(Err(e)) => Err(StoreError::Device(e)),
            other => unreachable!("read op completed as {other:?}"),
        }
    }

    fn install_clean(&mut self, page: u64, image: Box<[u8; PAGE_BYTES]>) {
        let victim = self.cache.insert(
            page,
            Frame {
                data: FrameData::Full(image),
                dirty: false,
            },
        );
        if let Some(victim) = victim {
            // Clean insertions can still push out dirty frames.
            let _ = self.handle_evicted(victim);
        }
    }

    fn wb_slot(&self, page: u64, slot: usize) -> Option<[u8; SLOT_BYTES]> {
        match self.wb.get(&page)? {
            WbState::AwaitProgram(image) => {
                Some(slot_value(image, slot).to_be_bytes())
            }
            WbState::AwaitRead(deltas) => deltas.get(&(slot as u16)).copied(),
        }
    }

    fn handle_evicted(&mut self, victim: Evicted) -> Result<(), StoreError> {
        if !victim.frame.dirty {
            return Ok(());
        }
        self.start_writeback(victim.page, victim.frame.data);
        Ok(())
    }

    fn start_writeback(&mut self, page: u64, data: FrameData) {
        // Writebacks of the same page must not overlap; wait out any
        // predecessor so programs land in order.
        while self.wb.contains_key(&page) {
            self.wait_writeback(page);
        }
        self.stats.writebacks += 1;
        match data {
            FrameData::Full(image) => {
                let op = self
                    .engine
                    .submit_write(page, image.clone())
                    .expect("leaf pages are provisioned");
                self.wb.insert(page, WbState::AwaitProgram(image));
                self.wb_by_op.insert(op, page);
            }
            FrameData::Sparse(deltas) => {
                let op = self
                    .engine
                    .submit_page_reads(&[page])
                    .expect("leaf pages are provisioned");
                self.wb.insert(page, WbState::AwaitRead(deltas));
                self.wb_by_op.insert(op, page);
            }
        }
        self.wb_order.push_back(page);
        while self.wb_order.len() > self.window {
            let oldest = *self.wb_order.front().unwrap();
            self.wait_writeback(oldest);
        }
    }

    fn wait_writeback(&mut self, page: u64) {
        while self.wb.contains_key(&page) {
            let completion = self
                .engine
                .run_until_completion()
                .expect("an in-flight writeback must complete");
            self.absorb(completion);
        }
    }

    fn wait_for(&mut self, op: u64) -> OpCompletion {
        loop {
            let completion = self
                .engine
                .run_until_completion()
                .expect("a submitted operation must complete");
            if completion.op_id == op {
                return completion;
            }
            self.absorb(completion);
        }
    }

    /// Route a completion that belongs to the writeback pipeline.
    fn absorb(&mut self, completion: OpCompletion) {
        let Some(page) = self.wb_by_op.remove(&completion.op_id) else {
            unreachable!("completion {} belongs to no pending operation", completion.op_id);
        };
        match completion.outcome {
            OpOutcome::Read(Ok(mut images)) => {
                let mut image = images.pop().expect("writeback read returns one page");
                if let Some(WbState::AwaitRead(deltas)) = self.wb.get(&page) {
                    for (&slot, bytes) in deltas {
                        let off = slot as usize * SLOT_BYTES;
                        image[off..off + SLOT_BYTES].copy_from_slice(bytes);
                    }
                } else {
                    unreachable!("writeback read for page {page} without buffered deltas");
                }
                let op = self
                    .engine
                    .submit_write(page, image.clone())
                    .expect("leaf pages are provisioned");
                self.wb.insert(page, WbState::AwaitProgram(image));
                self.wb_by_op.insert(op, page);
            }
            OpOutcome::Read(Err(_)) => {
                self.stats.writeback_failures += 1;
                self.finish_writeback(page);
            }
            OpOutcome::Write(result) => {
                if result.is_err() {
                    self.stats.writeback_failures += 1;
                }
                self.finish_writeback(page);
            }
            other => unreachable!("writeback op completed as {other:?}"),
        }
    }

    fn finish_writeback(&mut self, page: u64) {
        self.wb.remove(&page);
        if let Some(pos) = self.wb_order.iter().position(|&p| p == page) {
            self.wb_order.remove(pos);
        }
    }

    fn write_through(&mut self, page: u64, slot: usize, value: u64) -> Result<(), StoreError> {
        let mut image = self.current_base(page)?;
        let off = slot * SLOT_BYTES;
        image[off..off + SLOT_BYTES].copy_from_slice(&value.to_be_bytes());
        let op = self
            .engine
            .submit_write(page, image)
            .expect("leaf pages are provisioned");
        let completion = self.wait_for(op);
        self.stats.puts_written_through += 1;
        match completion.outcome {
            OpOutcome::Write(Ok(())) => Ok(()),
            OpOutcome::Write(Err(e)) => Err(StoreError::Device(e)),
            other => unreachable!("write op completed as {other:?}"),
        }
    }
}

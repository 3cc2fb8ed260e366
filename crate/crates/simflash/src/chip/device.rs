//! Per-plane flash state machine: block/page storage, the two page registers,
//! and the chip command set.
//!
//! Two layers live here. The untimed operations (`load_into_register`,
//! `active_search`, `write_page`, ...) mutate state and are what the
//! controller's event engine calls at phase boundaries. The timed wrappers
//! (`page_open`, `search`, `gather`, ...) bundle the same mutations with the
//! plane busy-window bookkeeping for direct use and for timing tests; each
//! returns the moment the plane frees up.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::reliability::{
    build_page_image, derandomize_chunk, randomize_key, verify_chunk, verify_on_open, ChunkVerdict,
    EccParams, OpenVerdict, Randomizer,
};
use crate::SimTime;

use super::bitmap::{ChunkBitmap, MatchBitmap};
use super::bus::{BusMode, TimingParams};
use super::geometry::{ChipGeometry, GeometryError, PhysBlockAddr, PhysPageAddr};
use super::matcher::match_page_keyed;
use super::page::{
    PageState, StoredPage, CHUNKS_PER_PAGE, CHUNK_BYTES, HEADER_BYTES, HEADER_REGION_BITS,
    PAGE_BITS, PAGE_BYTES,
};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ChipError {
    #[error("address outside device geometry")]
    InvalidAddress,
    #[error("plane busy until {until} ns")]
    PlaneBusy { until: SimTime },
    #[error("both page registers occupied")]
    RegistersFull,
    #[error("no active page in the plane registers")]
    NoActivePage,
    #[error("program issued to a page that is not erased")]
    ProgramToUnerasedPage,
    #[error("operation requires a programmed page")]
    NotProgrammed,
    #[error("chunk {0} uncorrectable during gather")]
    ChunkUncorrectable(u32),
}

/// Which register a `page_open` landed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Register {
    Active,
    Pending,
}

/// A sensed page copy held in a plane register. The bits are exactly what the
/// sense amplifiers latched: randomized, with injected faults applied. Erased
/// and retired pages latch as all-ones with an invalid header.
#[derive(Clone)]
pub struct LoadedPage {
    pub addr: PhysPageAddr,
    /// Dense page number, the randomization seed input.
    pub page_id: u64,
    pub payload: Box<[u8; PAGE_BYTES]>,
    pub header: [u8; HEADER_BYTES],
    pub parities: [u32; CHUNKS_PER_PAGE],
    pub error_bits: BTreeSet<u32>,
    pub write_time: SimTime,
    pub erased: bool,
}

/// The two per-plane data latches.
#[derive(Clone, Default)]
pub struct PlaneRegisters {
    pub active: Option<LoadedPage>,
    pub pending: Option<LoadedPage>,
}

/// Verification burst returned by a verified open: the raw header and first
/// chunk plus the verdict the controller acts on.
#[derive(Clone, Debug)]
pub struct OpenOutcome {
    pub header: [u8; HEADER_BYTES],
    pub first_chunk: [u8; CHUNK_BYTES],
    pub verdict: OpenVerdict,
}

#[derive(Clone, Debug)]
pub struct OpenResponse {
    pub register: Register,
    /// Present only for verified opens, which burst header + first chunk.
    pub verification: Option<OpenOutcome>,
    pub busy_until: SimTime,
}

/// Output of a gather: corrected, derandomized chunks in ascending index
/// order, plus how many bits each corrected chunk needed.
#[derive(Clone, Debug, Default)]
pub struct GatherResult {
    pub bytes: Vec<u8>,
    pub corrected: Vec<(u32, u32)>,
    pub busy_until: SimTime,
}

/// Raw image of the active page as a full-page read delivers it to the
/// controller-side ECC: randomized payload and header with faults applied,
/// stored parities, and the fault ledger the functional model corrects from.
#[derive(Clone)]
pub struct RawPageDump {
    pub page_addr: u64,
    pub payload: Box<[u8; PAGE_BYTES]>,
    pub header: [u8; HEADER_BYTES],
    pub parities: [u32; CHUNKS_PER_PAGE],
    pub error_bits: BTreeSet<u32>,
}

struct Block {
    pages: Vec<PageState>,
    erase_count: u64,
}

struct Plane {
    blocks: Vec<Block>,
    registers: PlaneRegisters,
    busy_until: SimTime,
}

/// Whole simulated device: every die, plane, block and page, plus the shared
/// timing/reliability parameters the commands consult.
pub struct FlashDevice {
    geometry: ChipGeometry,
    timings: TimingParams,
    randomizer: Randomizer,
    ecc: EccParams,
    planes: Vec<Plane>,
}

impl FlashDevice {
    pub fn new(
        geometry: ChipGeometry,
        timings: TimingParams,
        randomizer: Randomizer,
        ecc: EccParams,
    ) -> Result<Self, GeometryError> {
        geometry.validate()?;
        let planes = (0..geometry.total_planes())
            .map(|_| Plane {
                blocks: (0..geometry.blocks_per_plane)
                    .map(|_| Block {
                        pages: vec![PageState::Erased; geometry.pages_per_block as usize],
                        erase_count: 0,
                    })
                    .collect(),
                registers: PlaneRegisters::default(),
                busy_until: 0,
            })
            .collect();
        Ok(FlashDevice { geometry, timings, randomizer, ecc, planes })
    }

    pub fn geometry(&self) -> &ChipGeometry {
        &self.geometry
    }

    pub fn timings(&self) -> &TimingParams {
        &self.timings
    }

    pub fn randomizer(&self) -> &Randomizer {
        &self.randomizer
    }

    pub fn ecc(&self) -> &EccParams {
        &self.ecc
    }

    pub fn registers(&self, plane: u32) -> &PlaneRegisters {
        &self.planes[plane as usize].registers
    }

    pub fn busy_until(&self, plane: u32) -> SimTime {
        self.planes[plane as usize].busy_until
    }

    fn plane_of(&self, addr: PhysPageAddr) -> Result<u32, ChipError> {
        if !self.geometry.contains(addr) {
            return Err(ChipError::InvalidAddress);
        }
        Ok(self.geometry.plane_index(addr))
    }

    fn page_slot(&self, addr: PhysPageAddr) -> Result<&PageState, ChipError> {
        let plane = self.plane_of(addr)?;
        Ok(&self.planes[plane as usize].blocks[addr.block as usize].pages[addr.page as usize])
    }

    fn page_slot_mut(&mut self, addr: PhysPageAddr) -> Result<&mut PageState, ChipError> {
        let plane = self.plane_of(addr)? as usize;
        Ok(&mut self.planes[plane].blocks[addr.block as usize].pages[addr.page as usize])
    }

    /// Current lifecycle state of a physical page.
    pub fn page_state(&self, addr: PhysPageAddr) -> Result<&PageState, ChipError> {
        self.page_slot(addr)
    }

    /// Page states of one block, in page order.
    pub fn block_pages(
        &self,
        block: PhysBlockAddr,
    ) -> Result<impl Iterator<Item = &PageState>, ChipError> {
        let addr = block.page(0);
        let plane = self.plane_of(addr)?;
        Ok(self.planes[plane as usize].blocks[block.block as usize].pages.iter())
    }

    pub fn block_erase_count(&self, block: PhysBlockAddr) -> Result<u64, ChipError> {
        let plane = self.plane_of(block.page(0))?;
        Ok(self.planes[plane as usize].blocks[block.block as usize].erase_count)
    }

    /// Sense a page into a register image without touching plane state.
    fn sense(&self, addr: PhysPageAddr) -> Result<LoadedPage, ChipError> {
        let page_id = addr.pack(&self.geometry);
        let state = self.page_slot(addr)?;
        Ok(match state {
            PageState::Stored(p) => LoadedPage {
                addr,
                page_id,
                payload: p.raw_payload(),
                header: p.raw_header(),
                parities: p.parities,
                error_bits: p.error_bits.clone(),
                write_time: p.write_time,
                erased: false,
            },
            // erased and retired pages sense as unprogrammed media
            PageState::Erased | PageState::Retired => LoadedPage {
                addr,
                page_id,
                payload: Box::new([0xFF; PAGE_BYTES]),
                header: [0xFF; HEADER_BYTES],
                parities: [u32::MAX; CHUNKS_PER_PAGE],
                error_bits: BTreeSet::new(),
                write_time: 0,
                erased: true,
            },
        })
    }

    /// Array read into a register: the new page lands in `active` when that
    /// register is free, otherwise in `pending`.
    pub fn load_into_register(&mut self, addr: PhysPageAddr) -> Result<Register, ChipError> {
        let plane = self.plane_of(addr)? as usize;
        if self.planes[plane].registers.active.is_some()
            && self.planes[plane].registers.pending.is_some()
        {
            return Err(ChipError::RegistersFull);
        }
        let loaded = self.sense(addr)?;
        let regs = &mut self.planes[plane].registers;
        if regs.active.is_none() {
            regs.active = Some(loaded);
            Ok(Register::Active)
        } else {
            regs.pending = Some(loaded);
            Ok(Register::Pending)
        }
    }

    /// Release the active register and promote a pending page into it.
    pub fn close_page(&mut self, plane: u32) -> Result<(), ChipError> {
        let regs = &mut self.planes[plane as usize].registers;
        if regs.active.is_none() {
            return Err(ChipError::NoActivePage);
        }
        regs.active = regs.pending.take();
        Ok(())
    }

    pub fn active_page(&self, plane: u32) -> Option<&LoadedPage> {
        self.planes[plane as usize].registers.active.as_ref()
    }

    /// Masked equality match over the active page. The key is expanded to
    /// per-slot copies XORed with the keystream, which cancels the stored
    /// randomization, so results equal a plain match over logical data.
    pub fn active_search(&self, plane: u32, key: u64, mask: u64) -> Result<MatchBitmap, ChipError> {
        let page = self.active_page(plane).ok_or(ChipError::NoActivePage)?;
        let keys = randomize_key(key, page.page_id, &self.randomizer);
        Ok(match_page_keyed(&page.payload, |slot| keys[slot], mask))
    }

    /// Chunk retrieval from the active page: selected chunks are checked
    /// against their parity, corrected within the per-chunk strength, then
    /// derandomized and concatenated in ascending index order.
    pub fn active_gather(
        &self,
        plane: u32,
        chunks: ChunkBitmap,
    ) -> Result<(Vec<u8>, Vec<(u32, u32)>), ChipError> {
        let page = self.active_page(plane).ok_or(ChipError::NoActivePage)?;
        let mut bytes = Vec::with_capacity(chunks.count_ones() as usize * CHUNK_BYTES);
        let mut corrected = Vec::new();
        for chunk in chunks.iter_ones() {
            let off = chunk * CHUNK_BYTES;
            let raw: &[u8; CHUNK_BYTES] = page.payload[off..off + CHUNK_BYTES].try_into().unwrap();
            let lo = (chunk * CHUNK_BYTES * 8) as u32;
            let hi = lo + (CHUNK_BYTES * 8) as u32;
            let errors: BTreeSet<u16> = page
                .error_bits
                .range(lo..hi)
                .map(|&b| (b - lo) as u16)
                .collect();
            let (clean, verdict) = verify_chunk(
                raw,
                page.parities[chunk],
                &errors,
                self.ecc.chunk_t,
                &self.randomizer,
                page.page_id,
                chunk,
            );
            match (clean, verdict) {
                (Some(data), ChunkVerdict::Ok) => bytes.extend_from_slice(&data),
                (Some(data), ChunkVerdict::Corrected(n)) => {
                    corrected.push((chunk as u32, n));
                    bytes.extend_from_slice(&data);
                }
                _ => return Err(ChipError::ChunkUncorrectable(chunk as u32)),
            }
        }
        Ok((bytes, corrected))
    }

    /// Raw image of the active page for the controller-side full-page ECC.
    pub fn active_full_dump(&self, plane: u32) -> Result<RawPageDump, ChipError> {
        let page = self.active_page(plane).ok_or(ChipError::NoActivePage)?;
        Ok(RawPageDump {
            page_addr: page.page_id,
            payload: page.payload.clone(),
            header: page.header,
            parities: page.parities,
            error_bits: page.error_bits.clone(),
        })
    }

    /// Persist a prebuilt media image to an erased page.
    pub fn write_page(&mut self, addr: PhysPageAddr, image: StoredPage) -> Result<(), ChipError> {
        let slot = self.page_slot_mut(addr)?;
        if !slot.is_erased() {
            return Err(ChipError::ProgramToUnerasedPage);
        }
        *slot = PageState::Stored(image);
        Ok(())
    }

    /// Build and persist the image for a logical payload in one step.
    pub fn program_image(
        &mut self,
        addr: PhysPageAddr,
        logical: &[u8; PAGE_BYTES],
        now: SimTime,
    ) -> Result<(), ChipError> {
        let page_id = addr.pack(&self.geometry);
        let image = build_page_image(logical, page_id, now, &self.randomizer);
        self.write_page(addr, image)
    }

    /// Erase every page of a block. Register copies are latched bits and
    /// survive; the next sense of these pages reads erased.
    pub fn wipe_block(&mut self, block: PhysBlockAddr) -> Result<(), ChipError> {
        let plane = self.plane_of(block.page(0))? as usize;
        let blk = &mut self.planes[plane].blocks[block.block as usize];
        for page in &mut blk.pages {
            *page = PageState::Erased;
        }
        blk.erase_count += 1;
        Ok(())
    }

    /// Drop a superseded page's contents. The slot still counts as consumed
    /// until its block is erased.
    pub fn retire_page(&mut self, addr: PhysPageAddr) -> Result<(), ChipError> {
        let slot = self.page_slot_mut(addr)?;
        match slot {
            PageState::Stored(_) => {
                *slot = PageState::Retired;
                Ok(())
            }
            PageState::Retired => Ok(()),
            PageState::Erased => Err(ChipError::NotProgrammed),
        }
    }

    /// Flip stored bits of a programmed page. Positions `0..32768` hit the
    /// payload, `32768..32960` the header bytes.
    pub fn inject_errors(
        &mut self,
        addr: PhysPageAddr,
        positions: &[u32],
    ) -> Result<(), ChipError> {
        if positions.iter().any(|&b| b >= PAGE_BITS + HEADER_REGION_BITS) {
            return Err(ChipError::InvalidAddress);
        }
        let slot = self.page_slot_mut(addr)?;
        match slot {
            PageState::Stored(p) => {
                p.error_bits.extend(positions.iter().copied());
                Ok(())
            }
            _ => Err(ChipError::NotProgrammed),
        }
    }

    fn check_idle(&self, plane: u32, now: SimTime) -> Result<(), ChipError> {
        let until = self.planes[plane as usize].busy_until;
        if now < until {
            return Err(ChipError::PlaneBusy { until });
        }
        Ok(())
    }

    fn occupy(&mut self, plane: u32, until: SimTime) {
        self.planes[plane as usize].busy_until = until;
    }

    /// Timed open: array read plus, when `verify` is set, a 256-byte burst of
    /// header and first chunk at the match-mode rate with the freshness
    /// verdict computed on it. Unverified opens transfer nothing.
    pub fn page_open(
        &mut self,
        addr: PhysPageAddr,
        verify: bool,
        now: SimTime,
    ) -> Result<OpenResponse, ChipError> {
        let plane = self.plane_of(addr)?;
        self.check_idle(plane, now)?;
        let register = self.load_into_register(addr)?;
        let mut busy = now + self.timings.read_ns;
        let verification = if verify {
            busy += self.timings.transfer_ns(4 * CHUNK_BYTES as u64, BusMode::Match);
            let loaded = match register {
                Register::Active => self.planes[plane as usize].registers.active.as_ref(),
                Register::Pending => self.planes[plane as usize].registers.pending.as_ref(),
            }
            .unwrap();
            Some(self.verify_burst(loaded, now))
        } else {
            None
        };
        self.occupy(plane, busy);
        Ok(OpenResponse { register, verification, busy_until: busy })
    }

    /// Header check for a latched page, as the controller performs it on the
    /// open burst: derandomize chunk 0 (the latched copy already carries any
    /// injected faults) and test the CRC.
    pub fn verify_burst(&self, loaded: &LoadedPage, now: SimTime) -> OpenOutcome {
        let raw0: &[u8; CHUNK_BYTES] = loaded.payload[..CHUNK_BYTES].try_into().unwrap();
        let chunk0 = derandomize_chunk(raw0, loaded.page_id, 0, &self.randomizer);
        let verdict = verify_on_open(&loaded.header, &chunk0, now, self.ecc.age_margin_ns);
        OpenOutcome { header: loaded.header, first_chunk: *raw0, verdict }
    }

    /// Timed close. Register moves are free; the plane is untouched.
    pub fn page_close(&mut self, plane: u32, now: SimTime) -> Result<SimTime, ChipError> {
        self.check_idle(plane, now)?;
        self.close_page(plane)?;
        Ok(now)
    }

    /// Timed search: in-array match latency plus the 64-byte bitmap transfer
    /// at the match-mode rate.
    pub fn search(
        &mut self,
        plane: u32,
        key: u64,
        mask: u64,
        now: SimTime,
    ) -> Result<(MatchBitmap, SimTime), ChipError> {
        self.check_idle(plane, now)?;
        let bitmap = self.active_search(plane, key, mask)?;
        let busy = now
            + self.timings.match_ns()
            + self.timings.transfer_ns(MatchBitmap::BYTES as u64, BusMode::Match);
        self.occupy(plane, busy);
        Ok((bitmap, busy))
    }

    /// Timed gather: pure transfer at the match-mode rate, no array read
    /// (the page is already latched).
    pub fn gather(
        &mut self,
        plane: u32,
        chunks: ChunkBitmap,
        now: SimTime,
    ) -> Result<GatherResult, ChipError> {
        self.check_idle(plane, now)?;
        let (bytes, corrected) = self.active_gather(plane, chunks)?;
        let busy = now + self.timings.transfer_ns(bytes.len() as u64, BusMode::Match);
        self.occupy(plane, busy);
        Ok(GatherResult { bytes, corrected, busy_until: busy })
    }

    /// Timed full-page stream of the latched page at the given bus mode's
    /// rate. The baseline uses storage mode; the verification fallback streams
    /// in match mode without reopening the array.
    pub fn full_page_read(
        &mut self,
        plane: u32,
        mode: BusMode,
        now: SimTime,
    ) -> Result<(RawPageDump, SimTime), ChipError> {
        self.check_idle(plane, now)?;
        let dump = self.active_full_dump(plane)?;
        let busy = now + self.timings.transfer_ns(PAGE_BYTES as u64, mode);
        self.occupy(plane, busy);
        Ok((dump, busy))
    }

    /// Timed program: storage-rate data-in transfer followed by the array
    /// program pulse.
    pub fn program_page(
        &mut self,
        addr: PhysPageAddr,
        logical: &[u8; PAGE_BYTES],
        now: SimTime,
    ) -> Result<SimTime, ChipError> {
        let plane = self.plane_of(addr)?;
        self.check_idle(plane, now)?;
        let data_in = self.timings.transfer_ns(PAGE_BYTES as u64, BusMode::Storage);
        let busy = now + data_in + self.timings.program_ns;
        self.program_image(addr, logical, busy)?;
        self.occupy(plane, busy);
        Ok(busy)
    }

    /// Timed erase of one block.
    pub fn erase_block(
        &mut self,
        block: PhysBlockAddr,
        now: SimTime,
    ) -> Result<SimTime, ChipError> {
        let plane = self.plane_of(block.page(0))?;
        self.check_idle(plane, now)?;
        self.wipe_block(block)?;
        let busy = now + self.timings.erase_ns;
        self.occupy(plane, busy);
        Ok(busy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::slot_to_chunk_bitmap;
    use crate::US;

    fn device() -> FlashDevice {
        FlashDevice::new(
            ChipGeometry::default(),
            TimingParams::default(),
            Randomizer::default(),
            EccParams::default(),
        )
        .unwrap()
    }

    fn addr(block: u32, page: u32) -> PhysPageAddr {
        PhysPageAddr { channel: 0, package: 0, die: 0, plane: 0, block, page }
    }

    fn page_with_slots(slots: &[(usize, u64)]) -> Box<[u8; PAGE_BYTES]> {
        let mut logical = Box::new([0u8; PAGE_BYTES]);
        for &(slot, value) in slots {
            logical[slot * 8..slot * 8 + 8].copy_from_slice(&value.to_be_bytes());
        }
        logical
    }

    #[test]
    fn verified_open_takes_19200_ns() {
        let mut dev = device();
        let a = addr(0, 0);
        dev.program_image(a, &page_with_slots(&[]), 0).unwrap();
        let resp = dev.page_open(a, true, 100 * US).unwrap();
        assert_eq!(resp.busy_until, 100 * US + 19_200);
        assert_eq!(resp.register, Register::Active);
        let outcome = resp.verification.unwrap();
        assert_eq!(outcome.verdict, OpenVerdict::Clean);
    }

    #[test]
    fn unverified_open_is_a_bare_array_read() {
        let mut dev = device();
        let a = addr(0, 0);
        dev.program_image(a, &page_with_slots(&[]), 0).unwrap();
        let resp = dev.page_open(a, false, 0).unwrap();
        assert_eq!(resp.busy_until, 16_000);
        assert!(resp.verification.is_none());
    }

    #[test]
    fn open_respects_busy_window_and_registers() {
        let mut dev = device();
        for p in 0..3 {
            dev.program_image(addr(0, p), &page_with_slots(&[]), 0).unwrap();
        }
        let r0 = dev.page_open(addr(0, 0), true, 0).unwrap();
        assert_eq!(
            dev.page_open(addr(0, 1), true, 10).unwrap_err(),
            ChipError::PlaneBusy { until: r0.busy_until }
        );
        let r1 = dev.page_open(addr(0, 1), true, r0.busy_until).unwrap();
        assert_eq!(r1.register, Register::Pending);
        assert_eq!(
            dev.page_open(addr(0, 2), true, r1.busy_until).unwrap_err(),
            ChipError::RegistersFull
        );
        // close promotes pending, freeing a register
        dev.page_close(0, r1.busy_until).unwrap();
        assert_eq!(dev.active_page(0).unwrap().addr, addr(0, 1));
        let r2 = dev.page_open(addr(0, 2), true, r1.busy_until).unwrap();
        assert_eq!(r2.register, Register::Pending);
    }

    #[test]
    fn close_without_active_errors() {
        let mut dev = device();
        assert_eq!(dev.page_close(0, 0).unwrap_err(), ChipError::NoActivePage);
    }

    #[test]
    fn search_finds_planted_slots_through_randomization() {
        let mut dev = device();
        let a = addr(1, 7);
        let key = 0xDEAD_BEEF_0123_4567;
        dev.program_image(a, &page_with_slots(&[(3, key), (77, key), (400, key)]), 0)
            .unwrap();
        let open = dev.page_open(a, true, 0).unwrap();
        let (bitmap, busy) = dev.search(0, key, u64::MAX, open.busy_until).unwrap();
        assert_eq!(busy - open.busy_until, 1_103);
        assert_eq!(bitmap.iter_ones().collect::<Vec<_>>(), vec![3, 77, 400]);
    }

    #[test]
    fn search_without_open_errors() {
        let mut dev = device();
        assert_eq!(dev.search(0, 1, u64::MAX, 0).unwrap_err(), ChipError::NoActivePage);
    }

    #[test]
    fn gather_returns_chunks_ascending_and_timed() {
        let mut dev = device();
        let a = addr(2, 0);
        let mut logical = Box::new([0u8; PAGE_BYTES]);
        for (i, b) in logical.iter_mut().enumerate() {
            *b = (i % 256) as u8;
        }
        dev.program_image(a, &logical, 0).unwrap();
        let open = dev.page_open(a, true, 0).unwrap();
        let mut chunks = ChunkBitmap::default();
        chunks.set(63);
        chunks.set(0);
        let out = dev.gather(0, chunks, open.busy_until).unwrap();
        assert_eq!(out.bytes.len(), 128);
        assert_eq!(out.bytes[..64], logical[..64]);
        assert_eq!(out.bytes[64..], logical[63 * 64..]);
        assert_eq!(out.busy_until - open.busy_until, 1_600);
        assert!(out.corrected.is_empty());
    }

    #[test]
    fn gather_of_nothing_is_free() {
        let mut dev = device();
        let a = addr(0, 5);
        dev.program_image(a, &page_with_slots(&[]), 0).unwrap();
        let open = dev.page_open(a, false, 0).unwrap();
        let out = dev.gather(0, ChunkBitmap::default(), open.busy_until).unwrap();
        assert!(out.bytes.is_empty());
        assert_eq!(out.busy_until, open.busy_until);
    }

    #[test]
    fn gather_corrects_within_chunk_strength_and_fails_past_it() {
        let mut dev = device();
        let a = addr(3, 1);
        let logical = page_with_slots(&[(40, 7)]);
        dev.program_image(a, &logical, 0).unwrap();
        // chunk 5 gets 3 faults (correctable), chunk 9 gets 4 (not)
        dev.inject_errors(a, &[5 * 512 + 1, 5 * 512 + 20, 5 * 512 + 300]).unwrap();
        dev.inject_errors(a, &[9 * 512, 9 * 512 + 1, 9 * 512 + 2, 9 * 512 + 3]).unwrap();
        dev.page_open(a, true, 0).unwrap();
        let mut ok = ChunkBitmap::default();
        ok.set(5);
        let out = dev.gather(0, ok, 20_000).unwrap();
        assert_eq!(out.corrected, vec![(5, 3)]);
        assert_eq!(out.bytes[..], logical[5 * 64..6 * 64]);
        let mut bad = ChunkBitmap::default();
        bad.set(9);
        assert_eq!(
            dev.gather(0, bad, 22_000).unwrap_err(),
            ChipError::ChunkUncorrectable(9)
        );
    }

    #[test]
    fn full_stream_rates_differ_by_mode() {
        let mut dev = device();
        let a = addr(0, 9);
        dev.program_image(a, &page_with_slots(&[]), 0).unwrap();
        let open = dev.page_open(a, false, 0).unwrap();
        let (_, t1) = dev.full_page_read(0, BusMode::Storage, open.busy_until).unwrap();
        assert_eq!(t1 - open.busy_until, 5_120);
        let (_, t2) = dev.full_page_read(0, BusMode::Match, t1).unwrap();
        assert_eq!(t2 - t1, 51_200);
    }

    #[test]
    fn program_and_erase_have_datasheet_durations() {
        let mut dev = device();
        let a = addr(4, 0);
        let done = dev.program_page(a, &page_with_slots(&[(0, 42)]), 0).unwrap();
        assert_eq!(done, 5_120 + 80_000);
        assert_eq!(
            dev.program_page(a, &page_with_slots(&[]), done).unwrap_err(),
            ChipError::ProgramToUnerasedPage
        );
        let erased = dev.erase_block(a.block_addr(), done).unwrap();
        assert_eq!(erased - done, 1_000_000);
        assert!(dev.page_state(a).unwrap().is_erased());
        dev.program_page(a, &page_with_slots(&[]), erased).unwrap();
    }

    #[test]
    fn erased_page_opens_as_garbage_and_fails_verification() {
        let mut dev = device();
        let resp = dev.page_open(addr(6, 3), true, 0).unwrap();
        assert_eq!(resp.verification.unwrap().verdict, OpenVerdict::CrcMismatch);
        let dump = dev.active_full_dump(0).unwrap();
        assert!(dump.payload.iter().all(|&b| b == 0xFF));
    }

    #[test]
    fn stale_page_is_flagged_on_open() {
        let ecc = EccParams { age_margin_ns: 1_000, ..Default::default() };
        let mut dev = FlashDevice::new(
            ChipGeometry::default(),
            TimingParams::default(),
            Randomizer::default(),
            ecc,
        )
        .unwrap();
        let a = addr(0, 0);
        dev.program_image(a, &page_with_slots(&[]), 0).unwrap();
        let resp = dev.page_open(a, true, 5_000).unwrap();
        assert_eq!(resp.verification.unwrap().verdict, OpenVerdict::Stale);
    }

    #[test]
    fn corrupt_header_bit_fails_open_verification() {
        let mut dev = device();
        let a = addr(0, 1);
        dev.program_image(a, &page_with_slots(&[(1, 2)]), 0).unwrap();
        dev.inject_errors(a, &[PAGE_BITS + 64]).unwrap();
        let resp = dev.page_open(a, true, 10).unwrap();
        assert_eq!(resp.verification.unwrap().verdict, OpenVerdict::CrcMismatch);
    }

    #[test]
    fn fault_outside_chunk_zero_keeps_open_clean() {
        let mut dev = device();
        let a = addr(0, 2);
        dev.program_image(a, &page_with_slots(&[]), 0).unwrap();
        dev.inject_errors(a, &[5 * 512 + 7]).unwrap();
        let resp = dev.page_open(a, true, 10).unwrap();
        assert_eq!(resp.verification.unwrap().verdict, OpenVerdict::Clean);
    }

    #[test]
    fn retire_then_erase_reclaims_block() {
        let mut dev = device();
        let a = addr(7, 0);
        dev.program_image(a, &page_with_slots(&[]), 0).unwrap();
        dev.retire_page(a).unwrap();
        assert!(matches!(dev.page_state(a).unwrap(), PageState::Retired));
        assert!(!dev.page_state(a).unwrap().is_erased());
        dev.wipe_block(a.block_addr()).unwrap();
        assert!(dev.page_state(a).unwrap().is_erased());
        assert_eq!(dev.block_erase_count(a.block_addr()).unwrap(), 1);
    }

    #[test]
    fn match_results_route_gather_to_owning_chunk() {
        let mut dev = device();
        let a = addr(1, 1);
        let key = 0x0101_0101_0101_0101;
        dev.program_image(a, &page_with_slots(&[(9, key)]), 0).unwrap();
        dev.page_open(a, true, 0).unwrap();
        let bitmap = dev.active_search(0, key, u64::MAX).unwrap();
        let chunks = slot_to_chunk_bitmap(&bitmap);
        assert_eq!(chunks.iter_ones().collect::<Vec<_>>(), vec![1]);
        let (bytes, _) = dev.active_gather(0, chunks).unwrap();
        assert_eq!(&bytes[8..16], &key.to_be_bytes());
    }

    #[test]
    fn out_of_range_address_rejected() {
        let mut dev = device();
        let bad = PhysPageAddr { channel: 99, package: 0, die: 0, plane: 0, block: 0, page: 0 };
        assert_eq!(dev.page_open(bad, true, 0).unwrap_err(), ChipError::InvalidAddress);
        assert_eq!(
            dev.inject_errors(addr(0, 0), &[40_000]).unwrap_err(),
            ChipError::InvalidAddress
        );
    }
}

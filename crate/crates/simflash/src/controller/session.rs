//! Die sessions: the unit of work the scheduler dispatches. A session is an
//! ordered list of steps bound to one plane; steps map one-to-one onto logged
//! phases, so timing, bytes, and energy attribution all hang off the same
//! enum.

use std::collections::VecDeque;

use crate::chip::{
    BusMode, ChunkBitmap, MatchBitmap, PhysBlockAddr, PhysPageAddr, TimingParams, CHUNK_BYTES,
    PAGE_BYTES,
};
use crate::SimTime;

use super::energy::{CurrentParams, EnergyCategory};

/// Bytes moved by a verifying open: header copy plus the first chunk.
pub const VERIFY_BYTES: usize = 4 * CHUNK_BYTES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Probe {
    pub key: u64,
    pub mask: u64,
}

/// One schedulable phase. `op` fields route results back to the owning
/// flow's per-operation slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    /// Array sense into a register. A cached read targets the pending
    /// register and overlaps the current page's transfer phases; the cursor
    /// does not wait for it (pair it with a later `WaitArray`).
    ArrayRead { addr: PhysPageAddr, cached: bool },
    /// Stall the cursor until the last issued array read has settled.
    WaitArray,
    /// Header-and-first-chunk burst of the just-opened page, producing the
    /// freshness verdict.
    VerifyBurst,
    Match { op: usize, probe: Probe },
    BitmapOut { op: usize },
    Gather { op: usize, chunks: ChunkBitmap },
    /// Whole-page stream of the active register at the given interface rate.
    FullStream { mode: BusMode },
    DataIn,
    ProgramPulse,
    ErasePulse { block: PhysBlockAddr },
    Close,
    /// Suspension point: the owning flow decides what (if anything) to splice
    /// in once its inputs are ready.
    Barrier { tag: usize },
}

impl Step {
    /// Log labels; `None` for purely structural steps that leave no trace.
    pub fn labels(&self) -> Option<(&'static str, &'static str)> {
        Some(match self {
            Step::ArrayRead { cached: false, .. } => ("open", "array_read"),
            Step::ArrayRead { cached: true, .. } => ("open_cache", "array_read"),
            Step::VerifyBurst => ("open", "verify_out"),
            Step::Match { .. } => ("search", "match"),
            Step::BitmapOut { .. } => ("search", "bitmap_out"),
            Step::Gather { .. } => ("gather", "data_out"),
            Step::FullStream { .. } => ("full_read", "data_out"),
            Step::DataIn => ("program", "data_in"),
            Step::ProgramPulse => ("program", "program_pulse"),
            Step::ErasePulse { .. } => ("erase", "erase_pulse"),
            Step::Close => ("close", "close"),
            Step::WaitArray | Step::Barrier { .. } => return None,
        })
    }

    pub fn duration(&self, t: &TimingParams) -> SimTime {
        match self {
            Step::ArrayRead { .. } => t.read_ns,
            Step::VerifyBurst => t.transfer_ns(VERIFY_BYTES as u64, BusMode::Match),
            Step::Match { .. } => t.match_ns(),
            Step::BitmapOut { .. } => t.transfer_ns(MatchBitmap::BYTES as u64, BusMode::Match),
            Step::Gather { chunks, .. } => t.transfer_ns(self::gather_bytes(*chunks), BusMode::Match),
            Step::FullStream { mode } => t.transfer_ns(PAGE_BYTES as u64, *mode),
            Step::DataIn => t.transfer_ns(PAGE_BYTES as u64, BusMode::Storage),
            Step::ProgramPulse => t.program_ns,
            Step::ErasePulse { .. } => t.erase_ns,
            Step::Close | Step::WaitArray | Step::Barrier { .. } => 0,
        }
    }

    /// Payload bytes that cross the channel bus during this step.
    pub fn bytes(&self) -> u64 {
        match self {
            Step::VerifyBurst => VERIFY_BYTES as u64,
            Step::BitmapOut { .. } => MatchBitmap::BYTES as u64,
            Step::Gather { chunks, .. } => gather_bytes(*chunks),
            Step::FullStream { .. } | Step::DataIn => PAGE_BYTES as u64,
            _ => 0,
        }
    }

    pub fn category(&self) -> Option<EnergyCategory> {
        match self {
            Step::ArrayRead { .. } => Some(EnergyCategory::NandRead),
            Step::Match { .. } => Some(EnergyCategory::SimMatch),
            Step::VerifyBurst
            | Step::BitmapOut { .. }
            | Step::Gather { .. }
            | Step::FullStream { .. }
            | Step::DataIn => Some(EnergyCategory::BusActive),
            Step::ProgramPulse => Some(EnergyCategory::NandProgram),
            Step::ErasePulse { .. } => Some(EnergyCategory::NandErase),
            Step::Close | Step::WaitArray | Step::Barrier { .. } => None,
        }
    }

    pub fn current_ua(&self, c: &CurrentParams) -> u64 {
        match self.category() {
            Some(EnergyCategory::NandRead) => c.nand_read_ua,
            Some(EnergyCategory::NandProgram) => c.nand_program_ua,
            Some(EnergyCategory::NandErase) => c.nand_erase_ua,
            Some(EnergyCategory::BusActive) => c.bus_active_ua,
            Some(EnergyCategory::SimMatch) => c.sim_match_ua,
            Some(EnergyCategory::BusIdle) | None => 0,
        }
    }

    /// Whether this step occupies the channel bus for its whole duration.
    pub fn needs_bus(&self) -> bool {
        matches!(
            self,
            Step::VerifyBurst
                | Step::BitmapOut { .. }
                | Step::Gather { .. }
                | Step::FullStream { .. }
                | Step::DataIn
        )
    }

    /// Array-rail draw while this step runs, for peak-current admission.
    pub fn array_current_ua(&self, c: &CurrentParams) -> Option<u64> {
        match self {
            Step::ArrayRead { .. } => Some(c.nand_read_ua),
            Step::ProgramPulse => Some(c.nand_program_ua),
            Step::ErasePulse { .. } => Some(c.nand_erase_ua),
            _ => None,
        }
    }
}

pub fn gather_bytes(chunks: ChunkBitmap) -> u64 {
    chunks.count_ones() as u64 * CHUNK_BYTES as u64
}

/// Peak array-rail current a step list can draw; what admission charges
/// against the chip budget at dispatch.
pub fn peak_array_ua<'a>(steps: impl IntoIterator<Item = &'a Step>, c: &CurrentParams) -> u64 {
    steps.into_iter().filter_map(|s| s.array_current_ua(c)).max().unwrap_or(0)
}

/// Verifying open followed by one match-and-bitmap round per probe. A batch
/// of merged searches shares the single array read.
pub fn point_key_steps(addr: PhysPageAddr, probes: &[Probe]) -> VecDeque<Step> {
    let mut steps = VecDeque::with_capacity(probes.len() * 2 + 3);
    steps.push_back(Step::ArrayRead { addr, cached: false });
    steps.push_back(Step::VerifyBurst);
    for (op, &probe) in probes.iter().enumerate() {
        steps.push_back(Step::Match { op, probe });
        steps.push_back(Step::BitmapOut { op });
    }
    steps.push_back(Step::Close);
    steps
}

/// Unverified open that parks at a barrier until the key side has produced
/// chunk selections; gathers and the close are spliced in there.
pub fn point_value_steps(addr: PhysPageAddr) -> VecDeque<Step> {
    VecDeque::from([Step::ArrayRead { addr, cached: false }, Step::Barrier { tag: 0 }])
}

/// Unverified open plus a whole-page stream, for baseline reads, refresh
/// reads, and read-modify-write fills.
pub fn page_stream_steps(addr: PhysPageAddr, mode: BusMode) -> VecDeque<Step> {
    VecDeque::from([
        Step::ArrayRead { addr, cached: false },
        Step::FullStream { mode },
        Step::Close,
    ])
}

pub fn program_steps() -> VecDeque<Step> {
    VecDeque::from([Step::DataIn, Step::ProgramPulse])
}

pub fn erase_steps(block: PhysBlockAddr) -> VecDeque<Step> {
    VecDeque::from([Step::ErasePulse { block }])
}

/// Multi-page probe scan over pages sharing one die. The next page's array
/// read is issued into the pending register while the current page is still
/// streaming, and promoted by the close, so array time hides behind bus
/// time. `tags` name each page at its barrier; `op` for probe results is
/// `tag * probes.len() + probe_index`.
pub fn scan_steps(pages: &[(usize, PhysPageAddr)], probes: &[Probe]) -> VecDeque<Step> {
    assert!(!pages.is_empty() && !probes.is_empty());
    let mut steps = VecDeque::new();
    steps.push_back(Step::ArrayRead { addr: pages[0].1, cached: false });
    steps.push_back(Step::VerifyBurst);
    for (i, &(tag, _)) in pages.iter().enumerate() {
        for (j, &probe) in probes.iter().enumerate() {
            steps.push_back(Step::Match { op: tag * probes.len() + j, probe });
            steps.push_back(Step::BitmapOut { op: tag * probes.len() + j });
        }
        if let Some(&(_, next)) = pages.get(i + 1) {
            steps.push_back(Step::ArrayRead { addr: next, cached: true });
        }
        steps.push_back(Step::Barrier { tag });
        steps.push_back(Step::Close);
        if pages.get(i + 1).is_some() {
            steps.push_back(Step::WaitArray);
            steps.push_back(Step::VerifyBurst);
        }
    }
    steps
}

/// How a scan combines its per-probe bitmaps into the slot set to gather.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CombineExpr {
    Probe(usize),
    And(Box<CombineExpr>, Box<CombineExpr>),
    Or(Box<CombineExpr>, Box<CombineExpr>),
    Not(Box<CombineExpr>),
}

impl CombineExpr {
    pub fn probe(i: usize) -> Self {
        CombineExpr::Probe(i)
    }

    pub fn and(a: CombineExpr, b: CombineExpr) -> Self {
        CombineExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: CombineExpr, b: CombineExpr) -> Self {
        CombineExpr::Or(Box::new(a), Box::new(b))
    }

    pub fn not(a: CombineExpr) -> Self {
        CombineExpr::Not(Box::new(a))
    }

    pub fn eval(&self, probes: &[MatchBitmap]) -> MatchBitmap {
        match self {
            CombineExpr::Probe(i) => probes[*i],
            CombineExpr::And(a, b) => a.eval(probes).and(&b.eval(probes)),
            CombineExpr::Or(a, b) => a.eval(probes).or(&b.eval(probes)),
            CombineExpr::Not(a) => a.eval(probes).not(),
        }
    }

    /// Number of probe slots the expression expects.
    pub fn probes_needed(&self) -> usize {
        match self {
            CombineExpr::Probe(i) => i + 1,
            CombineExpr::And(a, b) | CombineExpr::Or(a, b) => {
                a.probes_needed().max(b.probes_needed())
            }
            CombineExpr::Not(a) => a.probes_needed(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::SLOTS_PER_PAGE;

    fn addr(block: u32, page: u32) -> PhysPageAddr {
        PhysPageAddr { channel: 0, package: 0, die: 0, plane: 0, block, page }
    }

    #[test]
    fn key_session_totals_add_up() {
        let t = TimingParams::default();
        let steps = point_key_steps(addr(0, 0), &[Probe { key: 1, mask: u64::MAX }]);
        let total: SimTime = steps.iter().map(|s| s.duration(&t)).sum();
        assert_eq!(total, 16_000 + 3_200 + 303 + 800);
        let bytes: u64 = steps.iter().map(Step::bytes).sum();
        assert_eq!(bytes, 256 + 64);
    }

    #[test]
    fn merged_batch_shares_one_array_read() {
        let probes = vec![Probe { key: 1, mask: u64::MAX }; 3];
        let steps = point_key_steps(addr(0, 0), &probes);
        let reads = steps.iter().filter(|s| matches!(s, Step::ArrayRead { .. })).count();
        let matches = steps.iter().filter(|s| matches!(s, Step::Match { .. })).count();
        assert_eq!((reads, matches), (1, 3));
    }

    #[test]
    fn scan_chain_pipelines_next_read_into_pending_register() {
        let pages = [(0, addr(0, 0)), (1, addr(0, 1)), (2, addr(0, 2))];
        let probes = [Probe { key: 0, mask: 0 }];
        let steps = scan_steps(&pages, &probes);
        let cached =
            steps.iter().filter(|s| matches!(s, Step::ArrayRead { cached: true, .. })).count();
        let waits = steps.iter().filter(|s| matches!(s, Step::WaitArray)).count();
        let closes = steps.iter().filter(|s| matches!(s, Step::Close)).count();
        assert_eq!((cached, waits, closes), (2, 2, 3));
        // every cached read is issued before the barrier of the page
        // currently streaming, so the array never idles between pages
        let first_cached =
            steps.iter().position(|s| matches!(s, Step::ArrayRead { cached: true, .. })).unwrap();
        let first_barrier = steps.iter().position(|s| matches!(s, Step::Barrier { .. })).unwrap();
        assert!(first_cached < first_barrier);
    }

    #[test]
    fn peak_draw_is_a_max_not_a_sum() {
        let c = CurrentParams::default();
        let pages = [(0, addr(0, 0)), (1, addr(0, 1))];
        let scan = scan_steps(&pages, &[Probe { key: 0, mask: 0 }]);
        assert_eq!(peak_array_ua(&scan, &c), c.nand_read_ua);
        assert_eq!(peak_array_ua(&program_steps(), &c), c.nand_program_ua);
        assert_eq!(peak_array_ua(&point_value_steps(addr(0, 0)), &c), c.nand_read_ua);
        assert_eq!(peak_array_ua(&erase_steps(addr(3, 0).block_addr()), &c), c.nand_erase_ua);
    }

    #[test]
    fn combine_expressions_evaluate_bitwise() {
        let a = MatchBitmap::from_fn(SLOTS_PER_PAGE, |i| i % 2 == 0);
        let b = MatchBitmap::from_fn(SLOTS_PER_PAGE, |i| i < 10);
        let probes = [a, b];
        let and = CombineExpr::and(CombineExpr::probe(0), CombineExpr::probe(1));
        assert_eq!(and.eval(&probes), a.and(&b));
        let diff = CombineExpr::and(CombineExpr::probe(0), CombineExpr::not(CombineExpr::probe(1)));
        assert_eq!(diff.eval(&probes), a.and(&b.not()));
        assert_eq!(diff.probes_needed(), 2);
        let or = CombineExpr::or(CombineExpr::probe(1), CombineExpr::probe(0));
        assert_eq!(or.eval(&probes).count_ones(), a.or(&b).count_ones());
    }
}

//! Flash chip model: geometry, page layout, match/chunk bitmaps, bus timing,
//! and the per-plane state machine with its command set.

mod bitmap;
mod bus;
mod device;
mod geometry;
mod matcher;
mod page;

pub use bitmap::{slot_to_chunk_bitmap, ChunkBitmap, MatchBitmap};
pub use bus::{BusMode, TimingParams};
pub use device::{
    ChipError, FlashDevice, GatherResult, LoadedPage, OpenOutcome, OpenResponse, PlaneRegisters,
    RawPageDump, Register,
};
pub use geometry::{ChipGeometry, GeometryError, PhysBlockAddr, PhysPageAddr};
pub use matcher::{match_page, match_page_keyed};
pub use page::{
    chunk_of_slot, PageState, StoredPage, CHUNKS_PER_PAGE, CHUNK_BYTES, HEADER_BYTES,
    HEADER_REGION_BITS, PAGE_BITS, PAGE_BYTES, PARITY_BYTES, SLOTS_PER_CHUNK, SLOTS_PER_PAGE,
    SLOT_BYTES,
};

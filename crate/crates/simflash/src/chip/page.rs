//! Fixed page layout shared by every module: a 4 KiB page is 512 slots of
//! 8 bytes, grouped into 64 chunks of 64 bytes. Slot `i` lives in chunk
//! `i / 8`. The out-of-band area carries a 24-byte verification header and
//! one 4-byte parity word per chunk.

use std::collections::BTreeSet;

use crate::SimTime;

pub const PAGE_BYTES: usize = 4096;
pub const SLOT_BYTES: usize = 8;
pub const SLOTS_PER_PAGE: usize = PAGE_BYTES / SLOT_BYTES;
pub const CHUNK_BYTES: usize = 64;
pub const CHUNKS_PER_PAGE: usize = PAGE_BYTES / CHUNK_BYTES;
pub const SLOTS_PER_CHUNK: usize = CHUNK_BYTES / SLOT_BYTES;
pub const HEADER_BYTES: usize = 24;
pub const PARITY_BYTES: usize = 4;

/// Number of payload bits; fault positions below this index flip payload bits.
pub const PAGE_BITS: u32 = (PAGE_BYTES * 8) as u32;

/// Fault positions in `PAGE_BITS..PAGE_BITS + HEADER_REGION_BITS` flip bits of
/// the stored header bytes instead of the payload.
pub const HEADER_REGION_BITS: u32 = (HEADER_BYTES * 8) as u32;

/// Chunk index owning a given slot.
#[inline]
pub fn chunk_of_slot(slot: usize) -> usize {
    slot / SLOTS_PER_CHUNK
}

/// A programmed page as it sits in the array: randomized payload, header and
/// parity out-of-band bytes, and the ledger of injected bit faults. Faults are
/// kept as positions rather than applied to the stored bytes so the read path
/// can both surface and (functionally) correct them.
#[derive(Clone)]
pub struct StoredPage {
    pub payload: Box<[u8; PAGE_BYTES]>,
    pub header: [u8; HEADER_BYTES],
    pub parities: [u32; CHUNKS_PER_PAGE],
    pub error_bits: BTreeSet<u32>,
    pub write_time: SimTime,
}

impl StoredPage {
    /// Payload copy with injected payload faults applied, as the sense
    /// amplifiers would deliver it.
    pub fn raw_payload(&self) -> Box<[u8; PAGE_BYTES]> {
        let mut out = self.payload.clone();
        for &bit in &self.error_bits {
            if bit < PAGE_BITS {
                out[(bit / 8) as usize] ^= 1 << (bit % 8);
            }
        }
        out
    }

    /// Header bytes with injected header-region faults applied.
    pub fn raw_header(&self) -> [u8; HEADER_BYTES] {
        let mut out = self.header;
        for &bit in &self.error_bits {
            if (PAGE_BITS..PAGE_BITS + HEADER_REGION_BITS).contains(&bit) {
                let off = (bit - PAGE_BITS) as usize;
                out[off / 8] ^= 1 << (off % 8);
            }
        }
        out
    }

    /// Injected payload fault positions, page-relative.
    pub fn payload_error_bits(&self) -> impl Iterator<Item = u32> + '_ {
        self.error_bits.iter().copied().filter(|&b| b < PAGE_BITS)
    }
}

/// Lifecycle of one physical page slot.
#[derive(Clone, Default)]
pub enum PageState {
    /// Erased; reads sense all-ones and the header region is invalid.
    #[default]
    Erased,
    /// Programmed and currently referenced.
    Stored(StoredPage),
    /// Superseded by a newer copy elsewhere; contents dropped, the slot still
    /// counts as used until its block is erased.
    Retired,
}

impl PageState {
    pub fn is_erased(&self) -> bool {
        matches!(self, PageState::Erased)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_constants_are_consistent() {
        assert_eq!(SLOTS_PER_PAGE, 512);
        assert_eq!(CHUNKS_PER_PAGE, 64);
        assert_eq!(SLOTS_PER_CHUNK, 8);
        assert_eq!(chunk_of_slot(0), 0);
        assert_eq!(chunk_of_slot(7), 0);
        assert_eq!(chunk_of_slot(8), 1);
        assert_eq!(chunk_of_slot(511), 63);
    }

    #[test]
    fn raw_payload_applies_payload_faults_only() {
        let mut page = StoredPage {
            payload: Box::new([0u8; PAGE_BYTES]),
            header: [0u8; HEADER_BYTES],
            parities: [0u32; CHUNKS_PER_PAGE],
            error_bits: BTreeSet::new(),
            write_time: 0,
        };
        page.error_bits.insert(9); // payload byte 1, bit 1
        page.error_bits.insert(PAGE_BITS + 3); // header byte 0, bit 3
        let raw = page.raw_payload();
        assert_eq!(raw[1], 0b10);
        assert_eq!(page.raw_header()[0], 0b1000);
        // stored copies remain pristine
        assert_eq!(page.payload[1], 0);
        assert_eq!(page.header[0], 0);
    }
}

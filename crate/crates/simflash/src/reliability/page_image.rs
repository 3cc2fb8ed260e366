//! Building and unwrapping the on-media page format.

use std::collections::BTreeSet;

use crate::chip::{
    StoredPage, CHUNKS_PER_PAGE, CHUNK_BYTES, PAGE_BYTES, SLOTS_PER_CHUNK, SLOTS_PER_PAGE,
};
use crate::SimTime;

use super::header::VerificationHeader;
use super::keystream::Randomizer;
use super::parity::chunk_parity;

/// Plain (pre-randomization) page contents.
pub type LogicalPage = Box<[u8; PAGE_BYTES]>;

/// Assemble the full media image for a page: randomize each chunk with its
/// own keystream, compute per-chunk parities and the verification header over
/// the logical bytes, and stamp the write time.
pub fn build_page_image(
    logical: &[u8; PAGE_BYTES],
    page_addr: u64,
    now: SimTime,
    rand: &Randomizer,
) -> StoredPage {
    let mut payload = Box::new([0u8; PAGE_BYTES]);
    let mut parities = [0u32; CHUNKS_PER_PAGE];
    for chunk in 0..CHUNKS_PER_PAGE {
        let off = chunk * CHUNK_BYTES;
        let logical_chunk: &[u8; CHUNK_BYTES] =
            logical[off..off + CHUNK_BYTES].try_into().unwrap();
        parities[chunk] = chunk_parity(logical_chunk);
        let stream = rand.chunk_stream(page_addr, chunk);
        for i in 0..CHUNK_BYTES {
            payload[off + i] = logical_chunk[i] ^ stream[i];
        }
    }
    let first_chunk: &[u8; CHUNK_BYTES] = logical[..CHUNK_BYTES].try_into().unwrap();
    let header = VerificationHeader::build(first_chunk, now);
    StoredPage {
        payload,
        header: header.to_bytes(),
        parities,
        error_bits: BTreeSet::new(),
        write_time: now,
    }
}

/// Undo randomization for a whole raw payload.
pub fn derandomize_payload(raw: &[u8; PAGE_BYTES], page_addr: u64, rand: &Randomizer) -> LogicalPage {
    let mut out = Box::new([0u8; PAGE_BYTES]);
    for chunk in 0..CHUNKS_PER_PAGE {
        let off = chunk * CHUNK_BYTES;
        let stream = rand.chunk_stream(page_addr, chunk);
        for i in 0..CHUNK_BYTES {
            out[off + i] = raw[off + i] ^ stream[i];
        }
    }
    out
}

/// Undo randomization for one raw chunk.
pub fn derandomize_chunk(
    raw: &[u8; CHUNK_BYTES],
    page_addr: u64,
    chunk_idx: usize,
    rand: &Randomizer,
) -> [u8; CHUNK_BYTES] {
    let stream = rand.chunk_stream(page_addr, chunk_idx);
    let mut out = *raw;
    for (b, s) in out.iter_mut().zip(stream.iter()) {
        *b ^= s;
    }
    out
}

/// Per-slot search keys for a randomized page: the comparator must see
/// `key XOR stream(slot)` so that matching randomized slots is equivalent to
/// matching the plain payload. The mask is untouched.
pub fn randomize_key(key: u64, page_addr: u64, rand: &Randomizer) -> [u64; SLOTS_PER_PAGE] {
    let mut out = [key; SLOTS_PER_PAGE];
    if !rand.enabled {
        return out;
    }
    for (slot, k) in out.iter_mut().enumerate() {
        *k ^= rand.slot_word(page_addr, slot / SLOTS_PER_CHUNK, slot % SLOTS_PER_CHUNK);
    }
    out
}

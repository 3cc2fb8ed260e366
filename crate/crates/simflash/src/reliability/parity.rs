//! Per-chunk parity: a CRC-32 over the pre-randomization chunk stands in for
//! the real BCH code. Detection uses the parity; correction is functional,
//! driven by the injected-fault ledger, with a fixed per-chunk strength.

use std::collections::BTreeSet;

use crate::chip::CHUNK_BYTES;

use super::crc::crc32;
use super::keystream::Randomizer;

pub fn chunk_parity(chunk: &[u8; CHUNK_BYTES]) -> u32 {
    crc32(chunk)
}

/// Outcome of reading one chunk through its parity check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkVerdict {
    Ok,
    /// `n` bit errors were inside the code's strength and were corrected.
    Corrected(u32),
    Uncorrectable,
}

/// Verify and (functionally) correct one gathered chunk.
///
/// `raw` is the chunk as sensed: randomized payload XOR injected faults.
/// `errors` holds the chunk-relative fault bit positions. At most `t` faults
/// are corrected; beyond that the chunk is uncorrectable and no data is
/// returned. The parity of the reconstructed chunk is checked against the
/// stored value either way.
pub fn verify_chunk(
    raw: &[u8; CHUNK_BYTES],
    parity: u32,
    errors: &BTreeSet<u16>,
    t: u32,
    rand: &Randomizer,
    page_addr: u64,
    chunk_idx: usize,
) -> (Option<[u8; CHUNK_BYTES]>, ChunkVerdict) {
    let n = errors.len() as u32;
    if n > t {
        return (None, ChunkVerdict::Uncorrectable);
    }
    let mut cleaned = *raw;
    for &bit in errors {
        debug_assert!((bit as usize) < CHUNK_BYTES * 8);
        cleaned[(bit / 8) as usize] ^= 1 << (bit % 8);
    }
    let stream = rand.chunk_stream(page_addr, chunk_idx);
    for (b, s) in cleaned.iter_mut().zip(stream.iter()) {
        *b ^= s;
    }
    if chunk_parity(&cleaned) != parity {
        return (None, ChunkVerdict::Uncorrectable);
    }
    let verdict = if n == 0 { ChunkVerdict::Ok } else { ChunkVerdict::Corrected(n) };
    (Some(cleaned), verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ([u8; CHUNK_BYTES], u32, [u8; CHUNK_BYTES]) {
        let rand = Randomizer::default();
        let mut logical = [0u8; CHUNK_BYTES];
        for (i, b) in logical.iter_mut().enumerate() {
            *b = (i * 7) as u8;
        }
        let parity = chunk_parity(&logical);
        let stream = rand.chunk_stream(42, 5);
        let mut raw = logical;
        for (b, s) in raw.iter_mut().zip(stream.iter()) {
            *b ^= s;
        }
        (raw, parity, logical)
    }

    #[test]
    fn clean_chunk_verifies() {
        let (raw, parity, logical) = fixture();
        let (data, verdict) =
            verify_chunk(&raw, parity, &BTreeSet::new(), 3, &Randomizer::default(), 42, 5);
        assert_eq!(verdict, ChunkVerdict::Ok);
        assert_eq!(data.unwrap(), logical);
    }

    #[test]
    fn errors_within_strength_are_corrected() {
        let (mut raw, parity, logical) = fixture();
        let errors: BTreeSet<u16> = [3u16, 100, 511].into_iter().collect();
        for &bit in &errors {
            raw[(bit / 8) as usize] ^= 1 << (bit % 8);
        }
        let (data, verdict) = verify_chunk(&raw, parity, &errors, 3, &Randomizer::default(), 42, 5);
        assert_eq!(verdict, ChunkVerdict::Corrected(3));
        assert_eq!(data.unwrap(), logical);
    }

    #[test]
    fn errors_beyond_strength_are_uncorrectable() {
        let (mut raw, parity, _) = fixture();
        let errors: BTreeSet<u16> = [1u16, 2, 3, 4].into_iter().collect();
        for &bit in &errors {
            raw[(bit / 8) as usize] ^= 1 << (bit % 8);
        }
        let (data, verdict) = verify_chunk(&raw, parity, &errors, 3, &Randomizer::default(), 42, 5);
        assert_eq!(verdict, ChunkVerdict::Uncorrectable);
        assert!(data.is_none());
    }

    #[test]
    fn parity_mismatch_after_reconstruction_is_uncorrectable() {
        let (raw, parity, _) = fixture();
        // claim no errors but hand in a parity for different content
        let (data, verdict) =
            verify_chunk(&raw, parity ^ 1, &BTreeSet::new(), 3, &Randomizer::default(), 42, 5);
        assert_eq!(verdict, ChunkVerdict::Uncorrectable);
        assert!(data.is_none());
    }
}

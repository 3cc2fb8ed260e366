//! Deterministic randomization keystream.
//!
//! Every chunk gets its own stream seeded by (page address, chunk index), so
//! single chunks can be derandomized without touching the rest of the page.
//! The generator is a splitmix-style mixer in counter mode: word `k` of a
//! chunk's stream is `mix(page * MULT + chunk + (k + 1) * STEP)`. The exact
//! constants and byte order (big-endian words) are part of the on-media
//! format; the vectors under `tests/golden/` pin them.

use serde::{Deserialize, Serialize};

use crate::chip::{CHUNK_BYTES, SLOTS_PER_CHUNK};

const SEED_MULT: u64 = 0x9E37_79B9_7F4A_7C15;
const WORD_STEP: u64 = 0xBF58_476D_1CE4_E5B9;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keystream source. When disabled it produces zeros, which turns every
/// randomize/derandomize step into the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Randomizer {
    pub enabled: bool,
}

impl Default for Randomizer {
    fn default() -> Self {
        Randomizer { enabled: true }
    }
}

impl Randomizer {
    pub const OFF: Randomizer = Randomizer { enabled: false };

    /// Keystream word covering one 8-byte slot.
    #[inline]
    pub fn slot_word(&self, page_addr: u64, chunk: usize, slot_in_chunk: usize) -> u64 {
        debug_assert!(slot_in_chunk < SLOTS_PER_CHUNK);
        if !self.enabled {
            return 0;
        }
        let seed = page_addr.wrapping_mul(SEED_MULT).wrapping_add(chunk as u64);
        mix(seed.wrapping_add(WORD_STEP.wrapping_mul(slot_in_chunk as u64 + 1)))
    }

    /// Full 64-byte stream for one chunk.
    pub fn chunk_stream(&self, page_addr: u64, chunk: usize) -> [u8; CHUNK_BYTES] {
        let mut out = [0u8; CHUNK_BYTES];
        if !self.enabled {
            return out;
        }
        for k in 0..SLOTS_PER_CHUNK {
            out[k * 8..k * 8 + 8]
                .copy_from_slice(&self.slot_word(page_addr, chunk, k).to_be_bytes());
        }
        out
    }
}

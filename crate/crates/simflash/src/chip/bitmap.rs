//! Result bitmaps for the search command: one bit per slot, and the folded
//! one-bit-per-chunk form used to drive gathers.

use std::fmt;

use super::page::{CHUNKS_PER_PAGE, SLOTS_PER_PAGE};

/// 512-bit slot match bitmap; bit `i` corresponds to slot `i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MatchBitmap {
    words: [u64; SLOTS_PER_PAGE / 64],
}

impl MatchBitmap {
    pub const EMPTY: MatchBitmap = MatchBitmap { words: [0; 8] };

    /// Wire size of the bitmap when transferred to the host.
    pub const BYTES: usize = SLOTS_PER_PAGE / 8;

    pub fn from_words(words: [u64; 8]) -> Self {
        MatchBitmap { words }
    }

    pub fn words(&self) -> &[u64; 8] {
        &self.words
    }

    #[inline]
    pub fn set(&mut self, slot: usize) {
        debug_assert!(slot < SLOTS_PER_PAGE);
        self.words[slot / 64] |= 1u64 << (slot % 64);
    }

    #[inline]
    pub fn get(&self, slot: usize) -> bool {
        debug_assert!(slot < SLOTS_PER_PAGE);
        self.words[slot / 64] >> (slot % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(w * 64 + b)
                }
            })
        })
    }

    pub fn and(&self, other: &MatchBitmap) -> MatchBitmap {
        let mut words = self.words;
        for (w, o) in words.iter_mut().zip(other.words.iter()) {
            *w &= o;
        }
        MatchBitmap { words }
    }

    pub fn or(&self, other: &MatchBitmap) -> MatchBitmap {
        let mut words = self.words;
        for (w, o) in words.iter_mut().zip(other.words.iter()) {
            *w |= o;
        }
        MatchBitmap { words }
    }

    pub fn not(&self) -> MatchBitmap {
        let mut words = self.words;
        for w in words.iter_mut() {
            *w = !*w;
        }
        MatchBitmap { words }
    }

    /// Bitmap over the first `n` slots, built from a predicate. Test helper
    /// shape, but also used to mask partially occupied pages.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> bool) -> MatchBitmap {
        let mut bm = MatchBitmap::default();
        for slot in 0..n.min(SLOTS_PER_PAGE) {
            if f(slot) {
                bm.set(slot);
            }
        }
        bm
    }
}

impl fmt::Debug for MatchBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MatchBitmap[{} set]", self.count_ones())
    }
}

/// 64-bit chunk bitmap; bit `j` selects chunk `j` for a gather.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ChunkBitmap(pub u64);

impl ChunkBitmap {
    #[inline]
    pub fn set(&mut self, chunk: usize) {
        debug_assert!(chunk < CHUNKS_PER_PAGE);
        self.0 |= 1u64 << chunk;
    }

    #[inline]
    pub fn get(&self, chunk: usize) -> bool {
        self.0 >> chunk & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(b)
            }
        })
    }

    pub fn union(&self, other: ChunkBitmap) -> ChunkBitmap {
        ChunkBitmap(self.0 | other.0)
    }
}

impl fmt::Debug for ChunkBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChunkBitmap({:#018x})", self.0)
    }
}

/// Fold the 512 slot bits down to 64 chunk bits: chunk `j` is selected when
/// any of slots `8j..8j+8` matched.
pub fn slot_to_chunk_bitmap(matches: &MatchBitmap) -> ChunkBitmap {
    let mut out = 0u64;
    for (w, &word) in matches.words().iter().enumerate() {
        // Each 64-slot word covers 8 chunks, one per byte.
        for byte in 0..8 {
            if word >> (byte * 8) & 0xFF != 0 {
                out |= 1u64 << (w * 8 + byte);
            }
        }
    }
    ChunkBitmap(out)
}

//! The in-chip comparator: masked 64-bit equality across all 512 slots of a
//! page. Slots are interpreted big-endian, matching how rows are encoded.

use super::bitmap::MatchBitmap;
use super::page::{PAGE_BYTES, SLOTS_PER_PAGE, SLOT_BYTES};

/// Pure match: bit `i` is set when `(slot_i XOR key) AND mask == 0`.
/// A zero mask therefore matches every slot.
pub fn match_page(payload: &[u8; PAGE_BYTES], key: u64, mask: u64) -> MatchBitmap {
    match_page_keyed(payload, |_| key, mask)
}

/// Match with a per-slot key, used when the stored payload is randomized and
/// the comparator must XOR the search key with each slot's keystream word.
pub fn match_page_keyed(
    payload: &[u8; PAGE_BYTES],
    mut key_for_slot: impl FnMut(usize) -> u64,
    mask: u64,
) -> MatchBitmap {
    let mut bm = MatchBitmap::default();
    for slot in 0..SLOTS_PER_PAGE {
        let off = slot * SLOT_BYTES;
        let word = u64::from_be_bytes(payload[off..off + SLOT_BYTES].try_into().unwrap());
        if (word ^ key_for_slot(slot)) & mask == 0 {
            bm.set(slot);
        }
    }
    bm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page_with(slots: &[(usize, u64)]) -> Box<[u8; PAGE_BYTES]> {
        let mut p = Box::new([0u8; PAGE_BYTES]);
        for &(slot, value) in slots {
            p[slot * 8..slot * 8 + 8].copy_from_slice(&value.to_be_bytes());
        }
        p
    }

    #[test]
    fn full_mask_exact_equality() {
        let p = page_with(&[(3, 0xDEADBEEF), (100, 0xDEADBEEF), (101, 0xDEADBEF0)]);
        let bm = match_page(&p, 0xDEADBEEF, u64::MAX);
        assert_eq!(bm.iter_ones().collect::<Vec<_>>(), vec![3, 100]);
    }

    #[test]
    fn zero_mask_matches_everything() {
        let p = page_with(&[(0, 1), (511, u64::MAX - 1)]);
        assert_eq!(match_page(&p, 0x1234, 0).count_ones(), 512);
    }

    #[test]
    fn masked_field_compare() {
        // top 16 bits form the field; two slots share the field value
        let p = page_with(&[
            (0, 0x00FA_0000_0000_0001),
            (1, 0x00FA_0000_dead_beef),
            (2, 0x00FB_0000_0000_0001),
        ]);
        let bm = match_page(&p, 0x00FA_0000_0000_0000, 0xFFFF_0000_0000_0000);
        assert_eq!(bm.iter_ones().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn matches_brute_force_on_random_pages() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut p = Box::new([0u8; PAGE_BYTES]);
            rng.fill(&mut p[..]);
            let key: u64 = rng.gen();
            let mask: u64 = if rng.gen_bool(0.5) { rng.gen() } else { 0xFF << (8 * rng.gen_range(0..8)) };
            let bm = match_page(&p, key, mask);
            for slot in 0..SLOTS_PER_PAGE {
                let word = u64::from_be_bytes(p[slot * 8..slot * 8 + 8].try_into().unwrap());
                assert_eq!(bm.get(slot), (word ^ key) & mask == 0);
            }
        }
    }
}

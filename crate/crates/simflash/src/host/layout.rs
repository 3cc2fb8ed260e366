//! On-disk leaf layout: each leaf is a pair of adjacent pages, one holding
//! 512 sorted big-endian keys and the other the value for each key at the
//! matching slot. Leaf `i` occupies logical pages `2i` (keys) and `2i + 1`
//! (values), so the pair lands on adjacent channels and can be fetched in
//! parallel.

use crate::chip::{PAGE_BYTES, SLOTS_PER_PAGE, SLOT_BYTES};
use crate::reliability::LogicalPage;

/// Slot filler for key pages past the last record. No real key may use it.
pub const KEY_PAD: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Record {
    pub key: u64,
    pub value: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeafPair {
    pub key_page: u64,
    pub value_page: u64,
    pub slot_base: u64,
}

/// Host-resident map from a key to the leaf pair that covers it. Stores one
/// first-key per leaf and nothing else; in particular no slot hints, so the
/// slot must be recovered from the leaf itself (or from a layout guarantee
/// the caller owns).
pub struct TopLevelIndex {
    first_keys: Vec<u64>,
}

impl TopLevelIndex {
    pub fn from_first_keys(first_keys: Vec<u64>) -> Self {
        assert!(first_keys.windows(2).all(|w| w[0] < w[1]));
        TopLevelIndex { first_keys }
    }

    pub fn locate(&self, key: u64) -> Option<LeafPair> {
        if self.first_keys.is_empty() {
            return None;
        }
        let leaf = self.first_keys.partition_point(|&first| first <= key);
        if leaf == 0 {
            return None;
        }
        let leaf = (leaf - 1) as u64;
        Some(LeafPair {
            key_page: 2 * leaf,
            value_page: 2 * leaf + 1,
            slot_base: self.first_keys[leaf as usize],
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.first_keys.len()
    }
}

pub fn key_page_of(leaf: u64) -> u64 {
    2 * leaf
}

pub fn value_page_of(leaf: u64) -> u64 {
    2 * leaf + 1
}

/// Build the leaf images for a sorted run of records and the index over
/// them. Keys must be strictly increasing and below [`KEY_PAD`].
pub fn build_leaves(records: &[Record]) -> (TopLevelIndex, Vec<(LogicalPage, LogicalPage)>) {
    assert!(
        records.windows(2).all(|w| w[0].key < w[1].key),
        "records must be sorted by strictly increasing key"
    );
    assert!(
        records.last().is_none_or(|r| r.key < KEY_PAD),
        "the maximum key is reserved as slot padding"
    );
    let mut first_keys = Vec::new();
    let mut pages = Vec::new();
    for chunk in records.chunks(SLOTS_PER_PAGE) {
        first_keys.push(chunk[0].key);
        let mut keys: LogicalPage = Box::new([0xFF; PAGE_BYTES]);
        let mut values: LogicalPage = Box::new([0; PAGE_BYTES]);
        for (slot, rec) in chunk.iter().enumerate() {
            let off = slot * SLOT_BYTES;
            keys[off..off + SLOT_BYTES].copy_from_slice(&rec.key.to_be_bytes());
            values[off..off + SLOT_BYTES].copy_from_slice(&rec.value.to_be_bytes());
        }
        pages.push((keys, values));
    }
    (TopLevelIndex { first_keys }, pages)
}

/// Find the slot of `key` in a key-page image by binary search.
pub fn scan_key_page(image: &[u8; PAGE_BYTES], key: u64) -> Option<usize> {
    let mut lo = 0usize;
    let mut hi = SLOTS_PER_PAGE;
    while lo < hi {
        let mid = (lo + hi) / 2;
        let off = mid * SLOT_BYTES;
        let stored = u64::from_be_bytes(image[off..off + SLOT_BYTES].try_into().unwrap());
        if stored < key {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if lo < SLOTS_PER_PAGE {
        let off = lo * SLOT_BYTES;
        let stored = u64::from_be_bytes(image[off..off + SLOT_BYTES].try_into().unwrap());
        if stored == key && key != KEY_PAD {
            return Some(lo);
        }
    }
    None
}

pub fn slot_value(image: &[u8; PAGE_BYTES], slot: usize) -> u64 {
    let off = slot * SLOT_BYTES;
    u64::from_be_bytes(image[off..off + SLOT_BYTES].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(n: u64) -> Vec<Record> {
        (0..n).map(|k| Record { key: k, value: k * 10 }).collect()
    }

    #[test]
    fn locate_maps_keys_to_their_leaf() {
        let (index, pages) = build_leaves(&dense(1300));
        assert_eq!(pages.len(), 3);
        assert_eq!(index.leaf_count(), 3);
        let pair = index.locate(0).unwrap();
        assert_eq!((pair.key_page, pair.value_page), (0, 1));
        let pair = index.locate(512).unwrap();
        assert_eq!((pair.key_page, pair.value_page), (2, 3));
        let pair = index.locate(1299).unwrap();
        assert_eq!((pair.key_page, pair.value_page), (4, 5));
        // Keys past the end still land in the last leaf; the leaf scan is
        // what rules them out.
        assert_eq!(index.locate(5000).unwrap().key_page, 4);
    }

    #[test]
    fn key_page_scan_finds_exact_slots_and_rejects_padding() {
        let (_, pages) = build_leaves(&dense(1300));
        let last_keys = &pages[2].0;
        assert_eq!(scan_key_page(last_keys, 1024), Some(0));
        assert_eq!(scan_key_page(last_keys, 1299), Some(275));
        assert_eq!(scan_key_page(last_keys, 1300), None);
        assert_eq!(scan_key_page(last_keys, KEY_PAD), None);
    }

    #[test]
    fn values_sit_at_matching_slots() {
        let (index, pages) = build_leaves(&dense(1300));
        let pair = index.locate(700).unwrap();
        let keys = &pages[(pair.key_page / 2) as usize].0;
        let values = &pages[(pair.value_page / 2) as usize].1;
        let slot = scan_key_page(keys, 700).unwrap();
        assert_eq!(slot as u64, 700 - pair.slot_base);
        assert_eq!(slot_value(values, slot), 7000);
    }

    #[test]
    fn sparse_keyspace_still_locates() {
        let records: Vec<Record> = (0..2000u64)
            .map(|i| Record { key: i * 7 + 3, value: i })
            .collect();
        let (index, pages) = build_leaves(&records);
        let pair = index.locate(3 + 7 * 600).unwrap();
        let keys = &pages[(pair.key_page / 2) as usize].0;
        let slot = scan_key_page(keys, 3 + 7 * 600).unwrap();
        assert_eq!(slot_value(&pages[(pair.key_page / 2) as usize].1, slot), 600);
        // A key between stored keys has a covering leaf but no slot.
        assert!(index.locate(4).is_some());
        assert_eq!(scan_key_page(keys, 4204), None);
    }
}

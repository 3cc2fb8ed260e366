//! Fixed-capacity LRU page cache shared by both access paths.
//!
//! Frames come in two shapes. A `Full` frame holds a complete page image,
//! the way a demand-paged read populates a cache. A `Sparse` frame holds
//! only buffered slot updates, which is what a write-buffered put creates
//! when the page itself was never read. Dirty frames leave the cache
//! exactly once, through the eviction result; the cache never writes
//! anything back on its own.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::chip::{PAGE_BYTES, SLOT_BYTES};

const NIL: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrameData {
    Full(Box<[u8; PAGE_BYTES]>),
    /// Buffered slot updates keyed by slot index, raw big-endian bytes.
    Sparse(BTreeMap<u16, [u8; SLOT_BYTES]>),
}

impl FrameData {
    /// The value currently servable for `slot`, if this frame knows it.
    pub fn slot(&self, slot: usize) -> Option<[u8; SLOT_BYTES]> {
        match self {
            FrameData::Full(image) => {
                let off = slot * SLOT_BYTES;
                Some(image[off..off + SLOT_BYTES].try_into().unwrap())
            }
            FrameData::Sparse(deltas) => deltas.get(&(slot as u16)).copied(),
        }
    }

    pub fn set_slot(&mut self, slot: usize, bytes: [u8; SLOT_BYTES]) {
        match self {
            FrameData::Full(image) => {
                let off = slot * SLOT_BYTES;
                image[off..off + SLOT_BYTES].copy_from_slice(&bytes);
            }
            FrameData::Sparse(deltas) => {
                deltas.insert(slot as u16, bytes);
            }
        }
    }

    /// Overlay a freshly read base image underneath any buffered deltas,
    /// upgrading the frame to a full one.
    pub fn merge_base(&mut self, base: &[u8; PAGE_BYTES]) {
        if let FrameData::Sparse(deltas) = self {
            let mut image = Box::new(*base);
            for (&slot, bytes) in deltas.iter() {
                let off = slot as usize * SLOT_BYTES;
                image[off..off + SLOT_BYTES].copy_from_slice(bytes);
            }
            *self = FrameData::Full(image);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub data: FrameData,
    pub dirty: bool,
}

#[derive(Debug)]
pub struct Evicted {
    pub page: u64,
    pub frame: Frame,
}

struct Node {
    page: u64,
    frame: Frame,
    prev: usize,
    next: usize,
}

pub struct PageCache {
    capacity: usize,
    nodes: Vec<Node>,
    free: Vec<usize>,
    head: usize,
    tail: usize,
    map: HashMap<u64, usize>,
}

impl PageCache {
    pub fn new(capacity: usize) -> Self {
        PageCache {
            capacity,
            nodes: Vec::new(),
            free: Vec::new(),
            head: NIL,
            tail: NIL,
            map: HashMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn contains(&self, page: u64) -> bool {
        self.map.contains_key(&page)
    }

    /// Look up without disturbing recency order.
    pub fn peek(&self, page: u64) -> Option<&Frame> {
        self.map.get(&page).map(|&idx| &self.nodes[idx].frame)
    }

    /// Look up and mark the frame most recently used.
    pub fn get(&mut self, page: u64) -> Option<&Frame> {
        let idx = *self.map.get(&page)?;
        self.touch(idx);
        Some(&self.nodes[idx].frame)
    }

    pub fn get_mut(&mut self, page: u64) -> Option<&mut Frame> {
        let idx = *self.map.get(&page)?;
        self.touch(idx);
        Some(&mut self.nodes[idx].frame)
    }

    /// Insert a frame for a page not currently resident. Returns the victim
    /// evicted to make room, which with capacity zero is the offered frame
    /// itself, bounced straight back.
    pub fn insert(&mut self, page: u64, frame: Frame) -> Option<Evicted> {
        assert!(
            !self.map.contains_key(&page),
            "page {page} already resident"
        );
        if self.capacity == 0 {
            return Some(Evicted { page, frame });
        }
        let victim = if self.map.len() == self.capacity {
            self.pop_tail()
        } else {
            None
        };
        let idx = match self.free.pop() {
            Some(idx) => {
                self.nodes[idx] = Node {
                    page,
                    frame,
                    prev: NIL,
                    next: NIL,
                };
                idx
            }
            None => {
                self.nodes.push(Node {
                    page,
                    frame,
                    prev: NIL,
                    next: NIL,
                });
                self.nodes.len() - 1
            }
        };
        self.push_head(idx);
        self.map.insert(page, idx);
        victim
    }

    fn pop_tail(&mut self) -> Option<Evicted> {
        if self.tail == NIL {
            return None;
        }
        let idx = self.tail;
        self.unlink(idx);
        let node = &mut self.nodes[idx];
        let page = node.page;
        let frame = std::mem::replace(
            &mut node.frame,
            Frame {
                data: FrameData::Sparse(BTreeMap::new()),
                dirty: false,
            },
        );
        self.map.remove(&page);
        self.free.push(idx);
        Some(Evicted { page, frame })
    }

    fn touch(&mut self, idx: usize) {
        if self.head == idx {
            return;
        }
        self.unlink(idx);
        self.push_head(idx);
    }

    fn unlink(&mut self, idx: usize) {
        let (prev, next) = (self.nodes[idx].prev, self.nodes[idx].next);
        if prev != NIL {
            self.nodes[prev].next = next;
        } else {
            self.head = next;
        }
        if next != NIL {
            self.nodes[next].prev = prev;
        } else {
            self.tail = prev;
        }
        self.nodes[idx].prev = NIL;
        self.nodes[idx].next = NIL;
    }

    fn push_head(&mut self, idx: usize) {
        self.nodes[idx].prev = NIL;
        self.nodes[idx].next = self.head;
        if self.head != NIL {
            self.nodes[self.head].prev = idx;
        }
        self.head = idx;
        if self.tail == NIL {
            self.tail = idx;
        }
    }
}

//! Queue of pages whose verification timestamp has aged past the safety
//! margin. Each page enters at most once until it is rewritten.

use std::collections::BTreeSet;

/// Pending-rewrite set keyed by logical page id.
#[derive(Clone, Debug, Default)]
pub struct RefreshQueue {
    entries: BTreeSet<u64>,
}

impl RefreshQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queue a page; returns false when it was already pending.
    pub fn enqueue(&mut self, page: u64) -> bool {
        self.entries.insert(page)
    }

    /// Take the lowest-numbered pending page.
    pub fn pop(&mut self) -> Option<u64> {
        self.entries.pop_first()
    }

    /// Drop a page without rewriting it (it was superseded by a fresh write).
    pub fn remove(&mut self, page: u64) -> bool {
        self.entries.remove(&page)
    }

    pub fn contains(&self, page: u64) -> bool {
        self.entries.contains(&page)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().copied()
    }
}

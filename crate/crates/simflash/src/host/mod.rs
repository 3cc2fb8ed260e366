//! Host-side index structures layered on the simulated device: a sorted
//! leaf-page layout with an in-memory top level, an LRU page cache that
//! doubles as a write buffer, a key-value store driving the controller, and
//! the query rewrites (row packing, range decomposition, partition probes)
//! that let the chip's match engine answer questions a block device cannot.

mod cache;
mod layout;
mod partition;
mod range;
mod row;
mod store;

pub use cache::{Evicted, Frame, FrameData, PageCache};
pub use layout::{
    build_leaves, key_page_of, scan_key_page, slot_value, value_page_of, LeafPair, Record,
    TopLevelIndex, KEY_PAD,
};
pub use partition::{partition_gather, partition_probe, PartitionError};
pub use range::{
    decompose_range, probe_matches, probe_set_matches, refine_range, BoundsMode, InvalidBounds,
    ProbeSet, RangePlan,
};
pub use row::{build_equality_query, decode_row, encode_row, FieldSpec, ValueOverflow};
pub use store::{Mode, OpenError, Store, StoreError, StoreParams, StoreStats};

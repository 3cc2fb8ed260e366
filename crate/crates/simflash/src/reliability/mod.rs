//! Data-integrity layer: payload randomization, the page verification header,
//! per-chunk parity with a functional correction model, whole-page error
//! correction with read retries, fault injection, and the refresh queue.

mod crc;
mod ecc;
mod faults;
mod header;
mod keystream;
mod page_image;
mod parity;
mod refresh;

pub use crc::{crc32, crc64};
pub use ecc::{correct_full_page, EccParams, ReadFailure};
pub use faults::{apply_faults, load_fault_scenario, FaultEntry, FaultScenarioError};
pub use header::{verify_on_open, OpenVerdict, VerificationHeader, HEADER_MAGIC};
pub use keystream::Randomizer;
pub use page_image::{
    build_page_image, derandomize_chunk, derandomize_payload, randomize_key, LogicalPage,
};
pub use parity::{chunk_parity, verify_chunk, ChunkVerdict};
pub use refresh::RefreshQueue;

//! Page verification header: 24 out-of-band bytes holding the write
//! timestamp, a fixed magic word, and a CRC-64 over (first chunk, timestamp,
//! magic). Checked optimistically on every verified page open; a mismatch
//! routes the read down the full-page correction path, and a clean-but-old
//! timestamp flags the page for refresh.

use crate::chip::{CHUNK_BYTES, HEADER_BYTES};
use crate::SimTime;

use super::crc::crc64;

/// "SiM-MAGC" in ASCII.
pub const HEADER_MAGIC: u64 = 0x5369_4D2D_4D41_4743;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerificationHeader {
    pub write_timestamp: SimTime,
    pub magic: u64,
    pub crc: u64,
}

impl VerificationHeader {
    /// Header for a page whose pre-randomization first chunk is `first_chunk`.
    pub fn build(first_chunk: &[u8; CHUNK_BYTES], write_timestamp: SimTime) -> Self {
        VerificationHeader {
            write_timestamp,
            magic: HEADER_MAGIC,
            crc: header_crc(first_chunk, write_timestamp, HEADER_MAGIC),
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[0..8].copy_from_slice(&self.write_timestamp.to_be_bytes());
        out[8..16].copy_from_slice(&self.magic.to_be_bytes());
        out[16..24].copy_from_slice(&self.crc.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; HEADER_BYTES]) -> Self {
        VerificationHeader {
            write_timestamp: u64::from_be_bytes(bytes[0..8].try_into().unwrap()),
            magic: u64::from_be_bytes(bytes[8..16].try_into().unwrap()),
            crc: u64::from_be_bytes(bytes[16..24].try_into().unwrap()),
        }
    }
}

fn header_crc(first_chunk: &[u8; CHUNK_BYTES], timestamp: SimTime, magic: u64) -> u64 {
    let mut buf = [0u8; CHUNK_BYTES + 16];
    buf[..CHUNK_BYTES].copy_from_slice(first_chunk);
    buf[CHUNK_BYTES..CHUNK_BYTES + 8].copy_from_slice(&timestamp.to_be_bytes());
    buf[CHUNK_BYTES + 8..].copy_from_slice(&magic.to_be_bytes());
    crc64(&buf)
}

/// Outcome of the optimistic open-time check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpenVerdict {
    Clean,
    /// Header or first chunk fails the CRC; contents cannot be trusted.
    CrcMismatch,
    /// CRC holds but the page has aged past the retention margin.
    Stale,
}

/// Check a page open: `first_chunk` must already be derandomized. The CRC is
/// evaluated over the fields as stored, so any flipped header bit fails it.
pub fn verify_on_open(
    header_bytes: &[u8; HEADER_BYTES],
    first_chunk: &[u8; CHUNK_BYTES],
    now: SimTime,
    age_margin: SimTime,
) -> OpenVerdict {
    let header = VerificationHeader::from_bytes(header_bytes);
    let expect = header_crc(first_chunk, header.write_timestamp, header.magic);
    if header.crc != expect || header.magic != HEADER_MAGIC {
        return OpenVerdict::CrcMismatch;
    }
    if now.saturating_sub(header.write_timestamp) > age_margin {
        return OpenVerdict::Stale;
    }
    OpenVerdict::Clean
}

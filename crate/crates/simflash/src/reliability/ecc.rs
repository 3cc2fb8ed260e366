//! Whole-page error correction with read retries.
//!
//! The model is functional: the page-level code corrects up to `page_t` bit
//! errors outright. Past that, each retry re-senses the page with every
//! injected error independently surviving or clearing (probability
//! `retry_p` of clearing, modeling a voltage-shifted re-read), until the
//! remaining errors fit the code or the budget runs out. After reconstruction
//! the header CRC is re-checked, so never-written garbage fails rather than
//! "correcting" successfully.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{RawPageDump, HEADER_BYTES, HEADER_REGION_BITS, PAGE_BITS, PAGE_BYTES};
use crate::SimTime;

use super::header::{verify_on_open, OpenVerdict};
use super::keystream::Randomizer;
use super::page_image::{derandomize_payload, LogicalPage};

/// Error-model strengths and retry policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EccParams {
    /// Correctable bits per 64-byte chunk on the gather path.
    pub chunk_t: u32,
    /// Correctable bits per page on the full-read path.
    pub page_t: u32,
    /// Probability that a retry clears any given injected error.
    pub retry_p: f64,
    /// Maximum re-reads after the initial attempt.
    pub retry_budget: u32,
    /// Age past which a clean page is queued for refresh.
    pub age_margin_ns: SimTime,
}

impl Default for EccParams {
    fn default() -> Self {
        EccParams {
            chunk_t: 3,
            page_t: 72,
            retry_p: 0.5,
            retry_budget: 5,
            age_margin_ns: 1_000_000 * 1_000_000_000, // 1e6 seconds
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("page unrecoverable after {retries} retries ({residual} residual errors)")]
pub struct ReadFailure {
    pub retries: u32,
    pub residual: usize,
}

/// Reconstruct the logical payload from a raw dump.
///
/// On success returns the derandomized payload and the number of retries
/// consumed (0 when the first pass was already within strength).
pub fn correct_full_page(
    dump: &RawPageDump,
    params: &EccParams,
    rand: &Randomizer,
    rng: &mut impl Rng,
) -> Result<(LogicalPage, u32), ReadFailure> {
    let total_errors = dump.error_bits.len();
    let mut retries = 0u32;
    loop {
        let within = if retries == 0 {
            total_errors as u32 <= params.page_t
        } else {
            // independent re-read: each injected error clears with retry_p
            let residual = dump
                .error_bits
                .iter()
                .filter(|_| !rng.gen_bool(params.retry_p))
                .count();
            residual as u32 <= params.page_t
        };
        if within {
            let (logical, header) = reconstruct(dump, rand);
            let first_chunk: &[u8; 64] = logical[..64].try_into().unwrap();
            // the corrected page must carry a coherent header; ages are not
            // re-judged here, staleness is the open path's concern
            match verify_on_open(&header, first_chunk, 0, SimTime::MAX) {
                OpenVerdict::CrcMismatch => {}
                _ => return Ok((logical, retries)),
            }
        }
        if retries >= params.retry_budget {
            return Err(ReadFailure { retries, residual: total_errors });
        }
        retries += 1;
    }
}

/// Clear every ledgered error, payload and header region alike, then
/// derandomize the payload.
fn reconstruct(dump: &RawPageDump, rand: &Randomizer) -> (LogicalPage, [u8; HEADER_BYTES]) {
    let mut cleaned = Box::new([0u8; PAGE_BYTES]);
    cleaned.copy_from_slice(&dump.payload[..]);
    let mut header = dump.header;
    for &bit in &dump.error_bits {
        if bit < PAGE_BITS {
            cleaned[(bit / 8) as usize] ^= 1 << (bit % 8);
        } else if bit < PAGE_BITS + HEADER_REGION_BITS {
            let off = (bit - PAGE_BITS) as usize;
            header[off / 8] ^= 1 << (off % 8);
        }
    }
    (derandomize_payload(&cleaned, dump.page_addr, rand), header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reliability::build_page_image;
    use rand::SeedableRng;
    use std::collections::BTreeSet;

    fn dump_with_errors(n_errors: u32) -> (RawPageDump, LogicalPage) {
        let rand = Randomizer::default();
        let mut logical = Box::new([0u8; PAGE_BYTES]);
        for (i, b) in logical.iter_mut().enumerate() {
            *b = (i % 251) as u8;
        }
        let mut stored = build_page_image(&logical, 33, 5, &rand);
        for k in 0..n_errors {
            stored.error_bits.insert(k * 101 % PAGE_BITS);
        }
        let dump = RawPageDump {
            page_addr: 33,
            payload: stored.raw_payload(),
            header: stored.raw_header(),
            parities: stored.parities,
            error_bits: stored
                .error_bits
                .iter()
                .copied()
                .collect::<BTreeSet<u32>>(),
        };
        (dump, logical)
    }

    #[test]
    fn within_strength_corrects_without_retries() {
        let (dump, logical) = dump_with_errors(72);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (out, retries) =
            correct_full_page(&dump, &EccParams::default(), &Randomizer::default(), &mut rng)
                .unwrap();
        assert_eq!(retries, 0);
        assert_eq!(&out[..], &logical[..]);
    }

    #[test]
    fn beyond_strength_retries_then_succeeds() {
        let (dump, logical) = dump_with_errors(80);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (out, retries) =
            correct_full_page(&dump, &EccParams::default(), &Randomizer::default(), &mut rng)
                .unwrap();
        assert!(retries >= 1);
        assert_eq!(&out[..], &logical[..]);
    }

    #[test]
    fn hopeless_page_exhausts_budget() {
        let (dump, _) = dump_with_errors(4000);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let params = EccParams { retry_p: 0.01, retry_budget: 4, ..Default::default() };
        let err = correct_full_page(&dump, &params, &Randomizer::default(), &mut rng).unwrap_err();
        assert_eq!(err.retries, 4);
    }

    #[test]
    fn sure_retry_succeeds_first_retry() {
        let (dump, _) = dump_with_errors(100);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let params = EccParams { retry_p: 1.0, ..Default::default() };
        let (_, retries) =
            correct_full_page(&dump, &params, &Randomizer::default(), &mut rng).unwrap();
        assert_eq!(retries, 1);
    }

    #[test]
    fn header_region_faults_correct_too() {
        let (mut dump, logical) = dump_with_errors(0);
        dump.error_bits.insert(PAGE_BITS + 17);
        dump.header[2] ^= 1 << 1; // apply the fault the ledger describes
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (out, retries) =
            correct_full_page(&dump, &EccParams::default(), &Randomizer::default(), &mut rng)
                .unwrap();
        assert_eq!(retries, 0);
        assert_eq!(&out[..], &logical[..]);
    }

    #[test]
    fn erased_page_never_corrects() {
        let dump = RawPageDump {
            page_addr: 9,
            payload: Box::new([0xFF; PAGE_BYTES]),
            header: [0xFF; HEADER_BYTES],
            parities: [0xFFFF_FFFF; 64],
            error_bits: BTreeSet::new(),
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        assert!(correct_full_page(
            &dump,
            &EccParams::default(),
            &Randomizer::default(),
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn retry_count_tracks_geometric_model() {
        // 80 injected errors, strength 72: a retry succeeds when at least 8
        // of 80 clear, each with p = 0.5 -- virtually certain, so the mean
        // retry count should sit near 1. With retry_p = 0.1 the per-retry
        // success probability is the binomial tail P[Bin(80, 0.1) >= 8],
        // about 0.47, and retries are geometric in that probability.
        let (dump, _) = dump_with_errors(80);
        let params = EccParams { retry_p: 0.1, retry_budget: 200, ..Default::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let trials = 10_000;
        let mut total = 0u64;
        for _ in 0..trials {
            let (_, r) =
                correct_full_page(&dump, &params, &Randomizer::default(), &mut rng).unwrap();
            total += r as u64;
        }
        let mean = total as f64 / trials as f64;
        // binomial tail P[Bin(80,0.1) >= 8]
        let p_success: f64 = {
            let n = 80u32;
            let p: f64 = 0.1;
            let mut tail = 0.0;
            for k in 8..=n {
                let mut log_c = 0.0f64;
                for j in 0..k {
                    log_c += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
                }
                tail += (log_c + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp();
            }
            tail
        };
        let expected = 1.0 / p_success;
        assert!(
            (mean - expected).abs() / expected < 0.05,
            "mean {mean:.3} vs geometric {expected:.3}"
        );
    }
}

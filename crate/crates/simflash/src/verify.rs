//! Self-checking oracle suites behind the `oracle` subcommand.
//!
//! Each suite drives one slice of the simulator against numbers that can be
//! computed independently: fixed command timelines, a worked range example,
//! analytic frequency laws, fault-injection outcomes. A failing check carries
//! both the expected and the observed value in its detail line, so a
//! regression points at itself without a debugger.

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chip::{
    match_page, ChipError, ChipGeometry, MatchBitmap, TimingParams, PAGE_BYTES, SLOTS_PER_PAGE,
    SLOT_BYTES,
};
use crate::config::TransferEnergyPreset;
use crate::controller::{
    CombineExpr, ControllerParams, CurrentParams, Engine, OpError, OpOutcome, Probe, SchedulerKind,
};
use crate::host::{
    decompose_range, encode_row, probe_set_matches, BoundsMode, FieldSpec, Mode, Record, Store,
    StoreParams,
};
use crate::reliability::{apply_faults, EccParams, FaultEntry, Randomizer};
use crate::workload::{fit_rank_count, ZipfSampler};

/// One named pass/fail outcome with a line of evidence.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check { name, passed, detail }
    }
}

/// Oracle family selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Pinned per-command latencies and byte counts.
    Timing,
    /// Range decomposition, including the worked salary example.
    Range,
    /// Searches over randomized storage against plain-payload bitmaps.
    Transparency,
    /// Error injection: correction, fallback, rejection, refresh.
    Reliability,
    /// Skewed key-frequency sampling against the analytic law.
    Zipf,
    /// Transfer-energy accounting and ledger closure.
    Energy,
    /// Every suite above, in order.
    All,
}

/// Run one suite (or all of them) and collect its checks.
pub fn run_suite(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Timing => timing_suite(),
        Suite::Range => range_suite(),
        Suite::Transparency => transparency_suite(),
        Suite::Reliability => reliability_suite(),
        Suite::Zipf => zipf_suite(),
        Suite::Energy => energy_suite(),
        Suite::All => [
            timing_suite(),
            range_suite(),
            transparency_suite(),
            reliability_suite(),
            zipf_suite(),
            energy_suite(),
        ]
        .into_iter()
        .flatten()
        .collect(),
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn engine_with(params: ControllerParams, ecc: EccParams, provisioned: u64) -> Engine {
    Engine::new(
        ChipGeometry::default(),
        TimingParams::default(),
        CurrentParams::default(),
        ecc,
        Randomizer::default(),
        params,
        provisioned,
        7,
        true,
    )
    .expect("default geometry is valid")
}

fn default_engine() -> Engine {
    engine_with(ControllerParams::default(), EccParams::default(), 64)
}

fn key_page(base: u64) -> Box<[u8; PAGE_BYTES]> {
    let mut p = Box::new([0u8; PAGE_BYTES]);
    for slot in 0..SLOTS_PER_PAGE {
        let v = (base + slot as u64).to_be_bytes();
        p[slot * SLOT_BYTES..(slot + 1) * SLOT_BYTES].copy_from_slice(&v);
    }
    p
}

fn value_page(tag: u8) -> Box<[u8; PAGE_BYTES]> {
    let mut p = Box::new([0u8; PAGE_BYTES]);
    for (i, b) in p.iter_mut().enumerate() {
        *b = tag ^ (i as u8).wrapping_mul(31);
    }
    p
}

fn loaded_engine() -> Engine {
    let mut e = default_engine();
    e.bulk_load_page(0, &key_page(5_000)).unwrap();
    e.bulk_load_page(1, &value_page(9)).unwrap();
    e
}

fn point_completion(e: &mut Engine, probe: Probe) -> (u64, OpOutcome) {
    e.submit_point(0, 1, probe).unwrap();
    let done = e.run_until_completion().unwrap();
    e.run_until_idle();
    (done.at, done.outcome)
}

const EXACT: u64 = u64::MAX;

fn small_store(mode: Mode) -> Store {
    let geometry = ChipGeometry {
        channels: 4,
        dies_per_package: 2,
        blocks_per_plane: 8,
        pages_per_block: 32,
        ..ChipGeometry::default()
    };
    let engine = Engine::new(
        geometry,
        TimingParams::default(),
        CurrentParams::default(),
        EccParams::default(),
        Randomizer::default(),
        ControllerParams::default(),
        128,
        11,
        false,
    )
    .unwrap();
    let records = (0..4 * 512).map(|k| Record { key: k, value: k ^ 0xABCD });
    Store::open(engine, records, StoreParams::new(mode, 8)).unwrap()
}

fn timing_suite() -> Vec<Check> {
    let mut checks = Vec::new();

    let mut e = loaded_engine();
    let (at, outcome) = point_completion(&mut e, Probe { key: 5_037, mask: EXACT });
    let stats = e.stats();
    let hit = matches!(outcome, OpOutcome::Point(Ok(_)));
    checks.push(Check::new(
        "point_query_hit",
        hit && at == 21_103 && stats.host_bytes == 128 && stats.bus_bytes == 384,
        format!(
            "expected 21103 ns, 128 host bytes, 384 bus bytes; got {at} ns, {} host, {} bus",
            stats.host_bytes, stats.bus_bytes
        ),
    ));

    let mut e = loaded_engine();
    let (at, outcome) = point_completion(&mut e, Probe { key: 99_999, mask: EXACT });
    let miss = matches!(outcome, OpOutcome::Point(Err(OpError::KeyNotFound)));
    checks.push(Check::new(
        "point_query_miss",
        miss && at == 20_303 && e.stats().host_bytes == 64,
        format!(
            "expected a 20303 ns miss moving 64 host bytes; got {at} ns, {} bytes",
            e.stats().host_bytes
        ),
    ));

    let mut e = loaded_engine();
    e.submit_page_reads(&[1]).unwrap();
    let done = e.run_until_completion().unwrap();
    e.run_until_idle();
    checks.push(Check::new(
        "full_page_read",
        done.at == 21_120 && e.stats().host_bytes == PAGE_BYTES as u64,
        format!("expected 21120 ns and 4096 host bytes; got {} ns, {}", done.at, e.stats().host_bytes),
    ));

    let params = ControllerParams { scheduler: SchedulerKind::Deadline, ..Default::default() };
    let mut e = engine_with(params, EccParams::default(), 64);
    e.bulk_load_page(0, &key_page(5_000)).unwrap();
    e.bulk_load_page(1, &value_page(9)).unwrap();
    let (at, _) = point_completion(&mut e, Probe { key: 5_037, mask: EXACT });
    checks.push(Check::new(
        "lone_search_waits_out_the_batch_deadline",
        at == 25_103,
        format!("expected 4000 ns deadline + 21103 ns search = 25103 ns; got {at}"),
    ));

    let mut e = default_engine();
    e.bulk_load_page(0, &value_page(1)).unwrap();
    e.bulk_load_page(8, &value_page(2)).unwrap();
    e.submit_page_reads(&[0]).unwrap();
    e.submit_page_reads(&[8]).unwrap();
    e.run_until_idle();
    let c1 = e.poll_completion().unwrap().at;
    let c2 = e.poll_completion().unwrap().at;
    checks.push(Check::new(
        "shared_channel_serializes_transfers",
        (c1, c2) == (21_120, 26_240),
        format!("expected completions at 21120/26240 ns; got {c1}/{c2}"),
    ));

    let params = ControllerParams { power_budget_ua: Some(25_000), ..Default::default() };
    let mut e = engine_with(params, EccParams::default(), 64);
    e.bulk_load_page(0, &value_page(1)).unwrap();
    e.bulk_load_page(8, &value_page(2)).unwrap();
    e.submit_page_reads(&[0]).unwrap();
    e.submit_page_reads(&[8]).unwrap();
    e.run_until_idle();
    let c1 = e.poll_completion().unwrap().at;
    let c2 = e.poll_completion().unwrap().at;
    checks.push(Check::new(
        "current_budget_staggers_array_reads",
        (c1, c2) == (21_120, 37_120),
        format!("expected completions at 21120/37120 ns under a 25 mA cap; got {c1}/{c2}"),
    ));

    let mut store = small_store(Mode::Baseline);
    let t0 = store.engine().now();
    let b0 = store.engine().stats().host_bytes;
    store.get(515).unwrap();
    let (dt, db) = (store.engine().now() - t0, store.engine().stats().host_bytes - b0);
    checks.push(Check::new(
        "cold_baseline_get_is_two_dependent_reads",
        dt == 42_240 && db == 8_192,
        format!("expected 42240 ns and 8192 bytes for a cold probe; got {dt} ns, {db} bytes"),
    ));

    let mut store = small_store(Mode::Sim);
    let t0 = store.engine().now();
    let b0 = store.engine().stats().host_bytes;
    store.get(515).unwrap();
    let (dt, db) = (store.engine().now() - t0, store.engine().stats().host_bytes - b0);
    checks.push(Check::new(
        "in_array_get_moves_two_chunks",
        dt == 21_103 && db == 128,
        format!("expected 21103 ns and 128 bytes; got {dt} ns, {db} bytes"),
    ));

    checks
}

fn bits_of(bitmap: &MatchBitmap, n: usize) -> String {
    (0..n).map(|i| if bitmap.get(i) { '1' } else { '0' }).collect()
}

fn range_suite() -> Vec<Check> {
    let mut checks = Vec::new();

    let salary = FieldSpec::new(0, 16);
    let id = FieldSpec::new(48, 16);
    let plan = decompose_range(2_000, 7_000, salary, BoundsMode::Strict).unwrap();

    let upper_ok = plan.upper.key == 0 && plan.upper.mask == 0xE000 << 48;
    let lower_ok = plan.lower.key == 0 && plan.lower.mask == 0xFC00 << 48;
    checks.push(Check::new(
        "salary_probe_masks",
        upper_ok && lower_ok,
        format!(
            "expected upper mask 0xE000.., lower mask 0xFC00..; got {:#06x}.., {:#06x}..",
            plan.upper.mask >> 48,
            plan.lower.mask >> 48
        ),
    ));

    let mut payload = Box::new([0u8; PAGE_BYTES]);
    for slot in 0..SLOTS_PER_PAGE {
        let pay = match slot {
            0 => 800,
            1 => 4_000,
            2 => 9_000,
            _ => 60_000,
        };
        let row = encode_row(&[(salary, pay), (id, slot as u64)]).unwrap().to_be_bytes();
        payload[slot * SLOT_BYTES..(slot + 1) * SLOT_BYTES].copy_from_slice(&row);
    }
    let upper_bits = match_page(&payload, plan.upper.key, plan.upper.mask);
    let lower_bits = match_page(&payload, plan.lower.key, plan.lower.mask).not();
    let combined = upper_bits.and(&lower_bits);
    let picture = format!(
        "salaries 800/4000/9000: upper={} lower={} combined={}",
        bits_of(&upper_bits, 3),
        bits_of(&lower_bits, 3),
        bits_of(&combined, 3)
    );
    checks.push(Check::new(
        "salary_example_bitmaps",
        bits_of(&upper_bits, 3) == "110"
            && bits_of(&lower_bits, 3) == "011"
            && combined.count_ones() == 1
            && combined.get(1),
        picture,
    ));

    let mut e = default_engine();
    e.bulk_load_page(0, &payload).unwrap();
    let mut on_chip = Vec::new();
    for set in [plan.first_pass(), plan.refined_pass()] {
        e.submit_scan(&[0], &set.probes, set.expr).unwrap();
        let done = e.run_until_completion().unwrap();
        e.run_until_idle();
        let OpOutcome::Scan(Ok(pages)) = done.outcome else {
            on_chip.clear();
            break;
        };
        on_chip.push(pages[0].slots.clone());
    }
    let live_ok = on_chip.len() == 2 && on_chip.iter().all(|s| *s == combined);
    checks.push(Check::new(
        "salary_example_on_chip",
        live_ok,
        format!(
            "first and refined scans must both return {}; got {}",
            bits_of(&combined, 3),
            on_chip.iter().map(|s| bits_of(s, 3)).collect::<Vec<_>>().join("/")
        ),
    ));

    let field = FieldSpec::new(8, 12);
    let span = 1u64 << field.width;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut dropped = 0u64;
    let mut widened = 0u64;
    let mut first_extra = 0u64;
    let mut refined_extra = 0u64;
    let mut band_mismatch = 0u64;
    for _ in 0..200 {
        let lower = rng.gen_range(1..span - 1);
        let upper = rng.gen_range(lower + 1..span);
        let Ok(plan) = decompose_range(lower, upper, field, BoundsMode::Strict) else {
            // Adjacent strict bounds select nothing; that rejection is its own test.
            continue;
        };
        let first = plan.first_pass();
        let refined = plan.refined_pass();
        let (accept_lo, accept_hi) = plan.accepted();
        for v in 0..span {
            let key = field.place(v).unwrap() | (rng.gen::<u64>() & !field.mask());
            let target = plan.contains(key);
            let in_first = probe_set_matches(&first, key);
            let in_refined = probe_set_matches(&refined, key);
            if target && !in_refined {
                dropped += 1;
            }
            if in_refined && !in_first {
                widened += 1;
            }
            if in_first != (accept_lo <= v && v <= accept_hi) {
                band_mismatch += 1;
            }
            first_extra += u64::from(in_first && !target);
            refined_extra += u64::from(in_refined && !target);
        }
    }
    checks.push(Check::new(
        "sampled_ranges_only_shrink",
        dropped == 0 && widened == 0 && band_mismatch == 0,
        format!(
            "200 random 12-bit ranges, every field value: {dropped} true matches dropped, \
             {widened} keys outside the first pass, {band_mismatch} off the accepted band; \
             false positives {first_extra} before refinement, {refined_extra} after"
        ),
    ));

    checks
}

fn transparency_suite() -> Vec<Check> {
    let mut e = engine_with(ControllerParams::default(), EccParams::default(), 128);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7EA5);
    let mut agreed = 0u32;
    let mut planted = 0u32;
    let total = 100u32;
    for i in 0..total {
        let mut payload = Box::new([0u8; PAGE_BYTES]);
        rng.fill(&mut payload[..]);
        e.bulk_load_page(u64::from(i), &payload).unwrap();

        let mask = match i % 3 {
            0 => EXACT,
            1 => rng.gen(),
            _ => rng.gen::<u64>() & rng.gen::<u64>(),
        };
        let key = if i % 2 == 0 {
            let slot = rng.gen_range(0..SLOTS_PER_PAGE);
            planted += 1;
            u64::from_be_bytes(payload[slot * 8..slot * 8 + 8].try_into().unwrap())
        } else {
            rng.gen()
        };

        let oracle = match_page(&payload, key, mask);
        e.submit_scan(&[u64::from(i)], &[Probe { key, mask }], CombineExpr::probe(0)).unwrap();
        let done = e.run_until_completion().unwrap();
        e.run_until_idle();
        if let OpOutcome::Scan(Ok(pages)) = done.outcome {
            agreed += u32::from(pages[0].slots == oracle);
        }
    }
    vec![Check::new(
        "randomized_search_equals_plain_bitmaps",
        agreed == total,
        format!(
            "{agreed}/{total} scans over randomized storage matched the plain-payload oracle \
             ({planted} with a planted hit, the rest random probes)"
        ),
    )]
}

fn inject(e: &mut Engine, logical: u64, bits: Vec<u32>) {
    let geometry = *e.geometry();
    let addr = e.ftl().resolve(logical).unwrap();
    let entry = FaultEntry { page: addr.pack(&geometry), bit_positions: bits, count: None };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    apply_faults(e.device_mut(), &[entry], &mut rng).unwrap();
}

fn reliability_suite() -> Vec<Check> {
    let mut checks = Vec::new();
    let probe = Probe { key: 5_037, mask: EXACT };

    // Key 5037 sits in slot 37, so the value gather pulls chunk 4 (bits
    // 2048..2560 of the value page).
    let mut clean = loaded_engine();
    let want = point_completion(&mut clean, probe);

    let mut e = loaded_engine();
    inject(&mut e, 1, vec![2_050, 2_222, 2_509]);
    let got = point_completion(&mut e, probe);
    checks.push(Check::new(
        "gather_corrects_within_chunk_strength",
        got == want && e.stats().ecc_retry_rounds == 0,
        format!(
            "three flipped bits in the gathered chunk: expected the clean answer at {} ns; \
             got {} ns, outcomes {}",
            want.0,
            got.0,
            if got.1 == want.1 { "equal" } else { "differ" }
        ),
    ));

    let mut e = loaded_engine();
    inject(&mut e, 1, (0..8).map(|i| 2_048 + i * 60).collect());
    let (_, outcome) = point_completion(&mut e, probe);
    let rejected = matches!(
        outcome,
        OpOutcome::Point(Err(OpError::Chip(ChipError::ChunkUncorrectable(4))))
    );
    checks.push(Check::new(
        "gather_rejects_beyond_chunk_strength",
        rejected,
        format!("eight flipped bits must fail chunk 4 as uncorrectable; got {outcome:?}"),
    ));

    let mut e = loaded_engine();
    inject(&mut e, 0, vec![32_768 + 5]);
    let got = point_completion(&mut e, probe);
    checks.push(Check::new(
        "header_corruption_falls_back_to_full_stream",
        got.0 == 71_200 && got.1 == want.1 && e.stats().verify_fallbacks == 1,
        format!(
            "one flipped header bit: expected the clean answer via a 71200 ns fallback; \
             got {} ns with {} fallbacks",
            got.0,
            e.stats().verify_fallbacks
        ),
    ));

    let mut e = loaded_engine();
    inject(&mut e, 0, (0..300).map(|i| i * 109).collect());
    let (_, outcome) = point_completion(&mut e, probe);
    let failed = matches!(
        outcome,
        OpOutcome::Point(Err(OpError::ReadFailure { retries: 5, residual: 300 }))
    );
    checks.push(Check::new(
        "swamped_page_reports_read_failure",
        failed,
        format!("300 scattered errors must exhaust all 5 retries; got {outcome:?}"),
    ));

    let ecc = EccParams { age_margin_ns: 1_000_000, ..Default::default() };
    let mut e = engine_with(ControllerParams::default(), ecc, 64);
    e.bulk_load_page(0, &key_page(5_000)).unwrap();
    e.bulk_load_page(1, &value_page(9)).unwrap();
    e.advance_clock(5_000_000);
    let home = e.ftl().resolve(0).unwrap();
    let first = point_completion(&mut e, probe);
    let flagged = e.stats().stale_pages_seen == 1 && e.pending_refreshes() == 1;
    let moved = e.refresh_tick() == 1 && {
        e.run_until_idle();
        e.ftl().resolve(0).unwrap() != home
    };
    let second = point_completion(&mut e, probe);
    checks.push(Check::new(
        "stale_page_refreshes_and_reopens_clean",
        flagged && moved && second.1 == first.1 && e.stats().verify_fallbacks == 1,
        format!(
            "aged page must be flagged ({}), relocated ({}), and answer identically with no \
             second fallback ({} total)",
            flagged,
            moved,
            e.stats().verify_fallbacks
        ),
    ));

    checks
}

fn zipf_suite() -> Vec<Check> {
    let mut checks = Vec::new();

    let z = ZipfSampler::new(0.9, 10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 1_000_000u64;
    let mut top = 0u64;
    for _ in 0..draws {
        top += u64::from(z.sample(&mut rng) == 0);
    }
    let analytic = z.mass(0);
    let empirical = top as f64 / draws as f64;
    let rel = (empirical - analytic).abs() / analytic;
    checks.push(Check::new(
        "top_rank_frequency_matches_analytic_mass",
        rel < 0.01,
        format!("analytic {analytic:.5}, empirical {empirical:.5}, relative error {rel:.4}"),
    ));

    let z = ZipfSampler::new(0.8, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = vec![0u64; 50];
    for _ in 0..draws {
        counts[z.sample(&mut rng) as usize] += 1;
    }
    let chi2: f64 = (0..50)
        .map(|r| {
            let expect = z.mass(r as u64) * draws as f64;
            let diff = counts[r] as f64 - expect;
            diff * diff / expect
        })
        .sum();
    checks.push(Check::new(
        "empirical_law_within_chi_square_bound",
        chi2 < 74.919,
        format!("chi-square over 50 ranks is {chi2:.2}; the 0.99 quantile at 49 dof is 74.919"),
    ));

    let target = ZipfSampler::new(0.9, 50_000).mass(0);
    let fitted = fit_rank_count(0.9, target);
    checks.push(Check::new(
        "rank_count_fit_inverts_the_top_mass",
        fitted.abs_diff(50_000) <= 1,
        format!("top mass {target:.6} should fit back to 50000 ranks; got {fitted}"),
    ));

    checks
}

fn energy_suite() -> Vec<Check> {
    let mut checks = Vec::new();
    let preset = TransferEnergyPreset::default();

    let pinned = preset.ratio(8_192, 128);
    let expected = (8_192.0 / 1_600.0 * 152.0) / (128.0 / 40.0 * 11.0);
    checks.push(Check::new(
        "pinned_transfer_ratio",
        (pinned - expected).abs() < 1e-6,
        format!("8192 bytes at 1600 MT/s / 152 mA vs 128 bytes at 40 MT/s / 11 mA = {pinned:.3}"),
    ));

    let mut baseline = small_store(Mode::Baseline);
    let b0 = baseline.engine().stats().host_bytes;
    baseline.get(515).unwrap();
    let baseline_bytes = baseline.engine().stats().host_bytes - b0;
    let mut sim = small_store(Mode::Sim);
    let s0 = sim.engine().stats().host_bytes;
    sim.get(515).unwrap();
    let sim_bytes = sim.engine().stats().host_bytes - s0;
    let measured = preset.ratio(baseline_bytes, sim_bytes);
    checks.push(Check::new(
        "measured_transfer_ratio_in_band",
        (11.0..=33.0).contains(&measured),
        format!(
            "one cold probe each way moved {baseline_bytes} vs {sim_bytes} bytes, \
             a {measured:.3}x transfer-energy gap (accepted band 11x to 33x)"
        ),
    ));

    let mut e = loaded_engine();
    e.submit_point(0, 1, Probe { key: 5_037, mask: EXACT }).unwrap();
    e.submit_page_reads(&[2]).unwrap();
    e.submit_write(3, value_page(4)).unwrap();
    e.run_until_idle();
    e.finalize();
    let replayed = e.log().recompute_energy(&CurrentParams::default());
    let ledger_ok = *e.ledger() == replayed;
    let bytes_ok = e.stats().bus_bytes == e.log().recompute_bytes();
    checks.push(Check::new(
        "ledger_closes_against_the_event_log",
        ledger_ok && bytes_ok,
        format!(
            "ledger total {} aJ vs replayed {} aJ; bus bytes {} vs {}",
            e.ledger().total_aj(),
            replayed.total_aj(),
            e.stats().bus_bytes,
            e.log().recompute_bytes()
        ),
    ));

    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for suite in [
            Suite::Timing,
            Suite::Range,
            Suite::Transparency,
            Suite::Reliability,
            Suite::Zipf,
            Suite::Energy,
        ] {
            let checks = run_suite(suite);
            assert!(!checks.is_empty());
            for c in &checks {
                assert!(c.passed, "{suite:?}/{}: {}", c.name, c.detail);
            }
        }
    }

    #[test]
    fn all_concatenates_in_order() {
        let all = run_suite(Suite::All);
        assert_eq!(all.len(), run_suite(Suite::Timing).len() + run_suite(Suite::Range).len() + 12);
        assert_eq!(all.first().unwrap().name, "point_query_hit");
        assert_eq!(all.last().unwrap().name, "ledger_closes_against_the_event_log");
        assert!(all_passed(&all));
    }

    #[test]
    fn a_failed_check_is_reported_not_panicked() {
        let checks = vec![
            Check::new("good", true, String::new()),
            Check::new("bad", false, "expected 1, got 2".into()),
        ];
        assert!(!all_passed(&checks));
    }
}

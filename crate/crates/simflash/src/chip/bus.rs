//! Per-die timing parameters and the two bus transfer modes.
//!
//! In match mode the interface runs slowly (the search logic taps the bus),
//! while storage mode runs at the full NV-DDR rate. Both use an 8-bit bus, so
//! one transfer moves one byte.

use serde::{Deserialize, Serialize};

use crate::SimTime;

/// Bus transfer mode in effect for a command's data phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusMode {
    Match,
    Storage,
}

/// Timing knobs. Defaults: 16 us page read, 80 us program, 1 ms erase,
/// match logic 10 cycles at 33 MHz, bus 80 MT/s in match mode and 800 MT/s in
/// storage mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingParams {
    pub read_ns: SimTime,
    pub program_ns: SimTime,
    pub erase_ns: SimTime,
    pub match_cycles: u64,
    pub match_clock_mhz: u64,
    pub match_rate_mts: u64,
    pub storage_rate_mts: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            read_ns: 16_000,
            program_ns: 80_000,
            erase_ns: 1_000_000,
            match_cycles: 10,
            match_clock_mhz: 33,
            match_rate_mts: 80,
            storage_rate_mts: 800,
        }
    }
}

impl TimingParams {
    pub fn rate_mts(&self, mode: BusMode) -> u64 {
        match mode {
            BusMode::Match => self.match_rate_mts,
            BusMode::Storage => self.storage_rate_mts,
        }
    }

    /// Time to move `bytes` over the 8-bit bus at the mode's transfer rate,
    /// rounded up to a whole nanosecond.
    pub fn transfer_ns(&self, bytes: u64, mode: BusMode) -> SimTime {
        let rate = self.rate_mts(mode);
        (bytes * 1_000).div_ceil(rate)
    }

    /// Latency of the on-die comparator pass.
    pub fn match_ns(&self) -> SimTime {
        (self.match_cycles * 1_000) / self.match_clock_mhz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rates() {
        let t = TimingParams::default();
        // 64 B bitmap at 80 MB/s
        assert_eq!(t.transfer_ns(64, BusMode::Match), 800);
        // open response burst
        assert_eq!(t.transfer_ns(256, BusMode::Match), 3_200);
        // full page, both modes
        assert_eq!(t.transfer_ns(4096, BusMode::Match), 51_200);
        assert_eq!(t.transfer_ns(4096, BusMode::Storage), 5_120);
        // 10 cycles at 33 MHz, floor to whole ns
        assert_eq!(t.match_ns(), 303);
    }

    #[test]
    fn odd_byte_counts_round_up() {
        let t = TimingParams::default();
        assert_eq!(t.transfer_ns(1, BusMode::Match), 13); // 12.5 rounded up
        assert_eq!(t.transfer_ns(0, BusMode::Match), 0);
    }
}

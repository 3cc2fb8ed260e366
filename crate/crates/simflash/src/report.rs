//! The measured outcome of one experiment, in an export-stable shape.
//! Floats are rounded to nine significant digits at build time so JSON and
//! CSV exports diff cleanly against golden files yet still parse back to the
//! exact stored value.

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerStats, EnergyCategory, EnergyLedger};
use crate::host::Mode;
use crate::metrics::{qps, summarize, LatencySummary};
use crate::workload::{OpKind, RunLog};

/// Attojoule totals by draw category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub nand_read_aj: u128,
    pub nand_program_aj: u128,
    pub nand_erase_aj: u128,
    pub bus_active_aj: u128,
    pub bus_idle_aj: u128,
    pub sim_match_aj: u128,
    pub total_aj: u128,
}

impl EnergyReport {
    pub fn from_ledger(ledger: &EnergyLedger) -> Self {
        EnergyReport {
            nand_read_aj: ledger.get_aj(EnergyCategory::NandRead),
            nand_program_aj: ledger.get_aj(EnergyCategory::NandProgram),
            nand_erase_aj: ledger.get_aj(EnergyCategory::NandErase),
            bus_active_aj: ledger.get_aj(EnergyCategory::BusActive),
            bus_idle_aj: ledger.get_aj(EnergyCategory::BusIdle),
            sim_match_aj: ledger.get_aj(EnergyCategory::SimMatch),
            total_aj: ledger.total_aj(),
        }
    }
}

/// Nine significant digits: enough to be stable, few enough to be portable.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: Mode,
    pub ops_total: u64,
    /// Operations past the warmup window; the numerator of `qps`.
    pub ops_measured: u64,
    /// Wall time of the whole run, warmup and final drain included.
    pub elapsed_ns: u64,
    /// Wall time from the first measured op to the end of the run.
    pub measured_elapsed_ns: u64,
    pub qps: f64,
    /// Latency of measured read operations (point and full-page).
    pub read_latency: Option<LatencySummary>,
    /// Bytes delivered across the host interface.
    pub host_bytes: u64,
    /// Bytes that crossed any channel bus, chip-internal traffic included.
    pub bus_bytes: u64,
    pub programs: u64,
    pub erases: u64,
    pub searches: u64,
    pub merged_searches: u64,
    /// Fraction of searches that shared a batch with another search.
    pub merge_probability: f64,
    pub energy: EnergyReport,
}

impl Report {
    pub fn build(mode: Mode, log: &RunLog, stats: &ControllerStats, ledger: &EnergyLedger) -> Self {
        let ops_total = log.records.len() as u64;
        let run_start = log.records.first().map_or(0, |r| r.start_ns);
        let end_ns = run_start + log.elapsed_ns;

        let measured_start = log.measured().next().map_or(end_ns, |r| r.start_ns);
        let ops_measured = log.measured().count() as u64;
        let measured_elapsed_ns = end_ns - measured_start;

        let mut read_latencies: Vec<u64> = log
            .measured()
            .filter(|r| matches!(r.kind, OpKind::Get | OpKind::FullPageRead))
            .map(|r| r.latency_ns())
            .collect();

        Report {
            mode,
            ops_total,
            ops_measured,
            elapsed_ns: log.elapsed_ns,
            measured_elapsed_ns,
            qps: round9(qps(ops_measured, measured_elapsed_ns)),
            read_latency: summarize(&mut read_latencies),
            host_bytes: stats.host_bytes,
            bus_bytes: stats.bus_bytes,
            programs: stats.programs,
            erases: stats.erases,
            searches: stats.searches,
            merged_searches: stats.merged_searches,
            merge_probability: round9(stats.merge_fraction()),
            energy: EnergyReport::from_ledger(ledger),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn csv_header() -> &'static str {
        "mode,ops_total,ops_measured,elapsed_ns,measured_elapsed_ns,qps,\
         read_p25_ns,read_p50_ns,read_p75_ns,read_p99_ns,\
         host_bytes,bus_bytes,programs,erases,searches,merged_searches,merge_probability,\
         nand_read_aj,nand_program_aj,nand_erase_aj,bus_active_aj,bus_idle_aj,sim_match_aj,total_aj"
    }

    pub fn csv_row(&self) -> String {
        let mode = match self.mode {
            Mode::Baseline => "baseline",
            Mode::Sim => "sim",
        };
        let lat = self
            .read_latency
            .map(|l| format!("{},{},{},{}", l.p25_ns, l.p50_ns, l.p75_ns, l.p99_ns))
            .unwrap_or_else(|| ",,,".into());
        let e = &self.energy;
        format!(
            "{mode},{},{},{},{},{},{lat},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.ops_total,
            self.ops_measured,
            self.elapsed_ns,
            self.measured_elapsed_ns,
            self.qps,
            self.host_bytes,
            self.bus_bytes,
            self.programs,
            self.erases,
            self.searches,
            self.merged_searches,
            self.merge_probability,
            e.nand_read_aj,
            e.nand_program_aj,
            e.nand_erase_aj,
            e.bus_active_aj,
            e.bus_idle_aj,
            e.sim_match_aj,
            e.total_aj,
        )
    }
}

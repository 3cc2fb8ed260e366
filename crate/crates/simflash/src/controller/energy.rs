//! Rail currents and the per-category energy ledger.
//!
//! Energy is integrated exactly in attojoules: millivolts times microamps
//! times nanoseconds is 1e-3 x 1e-6 x 1e-9 = 1e-18 joules per unit, so the
//! ledger never touches floating point until a report is rendered.

use serde::{Deserialize, Serialize};

use crate::SimTime;

/// Flat per-phase currents and the two supply rails.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurrentParams {
    /// I/O bus and match-logic rail, millivolts.
    pub bus_mv: u64,
    /// NAND array rail, millivolts.
    pub nand_mv: u64,
    pub bus_active_ua: u64,
    pub bus_idle_ua: u64,
    pub nand_read_ua: u64,
    pub nand_program_ua: u64,
    /// Erase pulse current. Datasheet-style tables usually quote read and
    /// program only; the default reuses their figure.
    pub nand_erase_ua: u64,
    pub sim_match_ua: u64,
}

impl Default for CurrentParams {
    fn default() -> Self {
        CurrentParams {
            bus_mv: 1_200,
            nand_mv: 3_300,
            bus_active_ua: 5_000,
            bus_idle_ua: 10,
            nand_read_ua: 25_000,
            nand_program_ua: 25_000,
            nand_erase_ua: 25_000,
            sim_match_ua: 2_500,
        }
    }
}

/// Where a phase's energy is attributed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EnergyCategory {
    NandRead,
    NandProgram,
    NandErase,
    BusActive,
    BusIdle,
    SimMatch,
}

impl EnergyCategory {
    pub const ALL: [EnergyCategory; 6] = [
        EnergyCategory::NandRead,
        EnergyCategory::NandProgram,
        EnergyCategory::NandErase,
        EnergyCategory::BusActive,
        EnergyCategory::BusIdle,
        EnergyCategory::SimMatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnergyCategory::NandRead => "nand_read",
            EnergyCategory::NandProgram => "nand_program",
            EnergyCategory::NandErase => "nand_erase",
            EnergyCategory::BusActive => "bus_active",
            EnergyCategory::BusIdle => "bus_idle",
            EnergyCategory::SimMatch => "sim_match",
        }
    }

    /// Supply rail the category draws from, in millivolts.
    pub fn rail_mv(self, currents: &CurrentParams) -> u64 {
        match self {
            EnergyCategory::NandRead | EnergyCategory::NandProgram | EnergyCategory::NandErase => {
                currents.nand_mv
            }
            EnergyCategory::BusActive | EnergyCategory::BusIdle | EnergyCategory::SimMatch => {
                currents.bus_mv
            }
        }
    }
}

/// Exact attojoule energy for one phase.
pub fn phase_energy_aj(mv: u64, ua: u64, ns: SimTime) -> u128 {
    mv as u128 * ua as u128 * ns as u128
}

/// Monotone per-category energy totals in attojoules.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EnergyLedger {
    entries: [u128; 6],
}

impl EnergyLedger {
    pub fn add(&mut self, category: EnergyCategory, mv: u64, ua: u64, ns: SimTime) {
        self.entries[category as usize] += phase_energy_aj(mv, ua, ns);
    }

    pub fn add_aj(&mut self, category: EnergyCategory, aj: u128) {
        self.entries[category as usize] += aj;
    }

    pub fn get_aj(&self, category: EnergyCategory) -> u128 {
        self.entries[category as usize]
    }

    pub fn total_aj(&self) -> u128 {
        self.entries.iter().sum()
    }

    pub fn get_joules(&self, category: EnergyCategory) -> f64 {
        self.get_aj(category) as f64 * 1e-18
    }

    pub fn total_joules(&self) -> f64 {
        self.total_aj() as f64 * 1e-18
    }
}

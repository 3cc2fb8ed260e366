//! Channel controller: turns host operations into per-die command sessions,
//! schedules them over shared buses under an optional per-chip current
//! budget, and keeps the logical-to-physical mapping, the energy ledger, and
//! the command trace.

mod address;
mod energy;
mod engine;
mod ftl;
mod log;
mod session;

pub use address::{AddressMap, OutOfRange};
pub use energy::{phase_energy_aj, CurrentParams, EnergyCategory, EnergyLedger};
pub use engine::{
    ControllerParams, ControllerStats, Engine, OpCompletion, OpError, OpOutcome, PageScanResult,
    PointResult, SchedulerKind, SetupError,
};
pub use ftl::{Ftl, OutOfSpace, Reservation};
pub use log::{format_ma, EventLog, EventRecord};
pub use session::{CombineExpr, Probe, Step, VERIFY_BYTES};

//! Simulator for an SSD whose NAND dies can answer masked equality searches
//! against an open page and stream back only the matching 64-byte chunks,
//! instead of shipping whole 4 KiB pages to the host.
//!
//! The crate is organized in layers:
//!
//! * [`chip`] — flash geometry, page/bitmap primitives, and the per-die state
//!   machine (page registers, search, gather, program, erase) with bus timing.
//! * [`reliability`] — payload randomization, the page verification header,
//!   per-chunk parity, the functional error-correction model, and refresh.
//! * [`controller`] — the discrete-event engine: per-die command queues,
//!   FCFS and deadline-batch scheduling, peak-current budgeting, the energy
//!   ledger, and the pipelined point-query flow.
//! * [`host`] — the on-flash sorted index, the page cache / write buffer, the
//!   baseline and search-offload read paths, row encoding, range decomposition,
//!   and partition gathers.
//! * [`workload`] — key/value workload generation (uniform and exact Zipf)
//!   and the closed-loop runner.
//! * [`config`], [`report`], [`experiment`] — experiment configuration,
//!   metrics, and the run/sweep entry points used by the CLI.
//! * [`verify`] — self-check suites exposed through `simflash oracle`.

pub mod chip;
pub mod config;
pub mod controller;
pub mod experiment;
pub mod host;
pub mod metrics;
pub mod reliability;
pub mod report;
pub mod verify;
pub mod workload;

/// Simulation timestamps and durations, in nanoseconds.
pub type SimTime = u64;

/// Nanoseconds per microsecond, for readability at call sites.
pub const US: SimTime = 1_000;

/// Nanoseconds per millisecond.
pub const MS: SimTime = 1_000_000;

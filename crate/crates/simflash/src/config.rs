//! Experiment configuration: one JSON document describing the device, the
//! cache, the workload, and the mode under test. Hardware knobs default to
//! the simulated chip's reference parameters so a config file only has to
//! name what it changes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{ChipGeometry, TimingParams, SLOTS_PER_PAGE};
use crate::controller::{ControllerParams, CurrentParams, SchedulerKind};
use crate::host::Mode;
use crate::reliability::{EccParams, Randomizer};
use crate::workload::{Distribution, SpecError, WorkloadSpec};
use crate::US;

/// Coverage settings the cache model is calibrated for.
pub const COVERAGE_GRID: [f64; 5] = [0.0, 0.10, 0.25, 0.50, 0.75];

/// Default index footprint: 16,384 pages of 4 KiB, a 64 MiB working set.
/// Half are key pages, so the default key space is 8,192 leaves of 512 keys.
pub const DEFAULT_INDEX_PAGES: u64 = 16_384;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerChoice {
    Fcfs,
    Deadline { deadline_ns: u64 },
}

impl Default for SchedulerChoice {
    fn default() -> Self {
        SchedulerChoice::Fcfs
    }
}

impl SchedulerChoice {
    pub fn controller_params(self, power_budget_ua: Option<u64>) -> ControllerParams {
        match self {
            SchedulerChoice::Fcfs => ControllerParams {
                scheduler: SchedulerKind::Fcfs,
                power_budget_ua,
                ..ControllerParams::default()
            },
            SchedulerChoice::Deadline { deadline_ns } => ControllerParams {
                scheduler: SchedulerKind::Deadline,
                batch_deadline_ns: deadline_ns,
                power_budget_ua,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub geometry: ChipGeometry,
    #[serde(default)]
    pub timings: TimingParams,
    #[serde(default)]
    pub currents: CurrentParams,
    #[serde(default)]
    pub ecc: EccParams,
    #[serde(default)]
    pub randomizer: Randomizer,
    #[serde(default = "default_index_pages")]
    pub index_pages: u64,
    /// Fraction of the index the page cache can hold; 0 disables caching.
    pub cache_coverage: f64,
    pub workload: WorkloadSpec,
    pub mode: Mode,
    #[serde(default)]
    pub scheduler: SchedulerChoice,
    #[serde(default)]
    pub power_budget_ua: Option<u64>,
    /// Seeds the device-side randomness (fault draws, wear placement).
    #[serde(default = "default_device_seed")]
    pub device_seed: u64,
    #[serde(default)]
    pub log_events: bool,
    /// Where exports land; None keeps everything in memory.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_index_pages() -> u64 {
    DEFAULT_INDEX_PAGES
}

fn default_device_seed() -> u64 {
    7
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cache_coverage: {got} is not one of the calibrated settings {COVERAGE_GRID:?}")]
    UnknownCoverage { got: f64 },
    #[error("index_pages: {got} must be a positive even number (keys and values pair up)")]
    OddIndex { got: u64 },
    #[error("index_pages: {index_pages} pages exceed the device's {capacity}")]
    IndexTooLarge { index_pages: u64, capacity: u64 },
    #[error("workload.op_count: an empty workload measures nothing")]
    EmptyWorkload,
    #[error("workload.key_count: {keys} keys exceed the index's {capacity} slots")]
    TooManyKeys { keys: u64, capacity: u64 },
    #[error("workload.{0}")]
    Workload(#[from] SpecError),
    #[error("{path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Malformed {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl ExperimentConfig {
    /// A complete write-heavy skewed-workload experiment on the reference
    /// hardware; callers override what they study.
    pub fn reference(mode: Mode) -> Self {
        let key_count = DEFAULT_INDEX_PAGES / 2 * SLOTS_PER_PAGE as u64;
        ExperimentConfig {
            geometry: ChipGeometry::default(),
            timings: TimingParams::default(),
            currents: CurrentParams::default(),
            ecc: EccParams::default(),
            randomizer: Randomizer::default(),
            index_pages: DEFAULT_INDEX_PAGES,
            cache_coverage: 0.25,
            workload: WorkloadSpec {
                key_count,
                op_count: 100_000,
                read_ratio: 0.2,
                distribution: Distribution::Zipf { alpha: 0.9 },
                full_page_read_ratio: 0.0,
                warmup_fraction: 0.3,
                seed: 42,
            },
            mode,
            scheduler: SchedulerChoice::Fcfs,
            power_budget_ua: None,
            device_seed: 7,
            log_events: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !COVERAGE_GRID.iter().any(|&c| (c - self.cache_coverage).abs() < 1e-9) {
            return Err(ConfigError::UnknownCoverage { got: self.cache_coverage });
        }
        if self.index_pages == 0 || self.index_pages % 2 != 0 {
            return Err(ConfigError::OddIndex { got: self.index_pages });
        }
        let capacity = self.geometry.total_pages();
        if self.index_pages > capacity {
            return Err(ConfigError::IndexTooLarge { index_pages: self.index_pages, capacity });
        }
        self.workload.validate()?;
        if self.workload.op_count == 0 {
            return Err(ConfigError::EmptyWorkload);
        }
        let key_capacity = self.index_pages / 2 * SLOTS_PER_PAGE as u64;
        if self.workload.key_count > key_capacity {
            return Err(ConfigError::TooManyKeys {
                keys: self.workload.key_count,
                capacity: key_capacity,
            });
        }
        Ok(())
    }

    /// Cache frames implied by the coverage ratio.
    pub fn cache_frames(&self) -> usize {
        (self.cache_coverage * self.index_pages as f64).round() as usize
    }

    pub fn controller_params(&self) -> ControllerParams {
        self.scheduler.controller_params(self.power_budget_ua)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::from_json(&text).map_err(|source| ConfigError::Malformed {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }
}

/// Per-query transfer-energy comparison constants: the narrow search-command
/// bus against the full-rate page bus, both at the shared bus voltage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferEnergyPreset {
    pub baseline_bus_mts: u64,
    pub baseline_bus_ma: u64,
    pub sim_bus_mts: u64,
    pub sim_bus_ma: u64,
}

impl Default for TransferEnergyPreset {
    fn default() -> Self {
        TransferEnergyPreset {
            baseline_bus_mts: 1600,
            baseline_bus_ma: 152,
            sim_bus_mts: 40,
            sim_bus_ma: 11,
        }
    }
}

impl TransferEnergyPreset {
    /// Relative per-query transfer energy, baseline over search path, given
    /// the host-visible bytes each moves. Voltage cancels; energy scales as
    /// bytes x current / rate.
    pub fn ratio(&self, baseline_bytes: u64, sim_bytes: u64) -> f64 {
        let base = baseline_bytes as f64 * self.baseline_bus_ma as f64
            / self.baseline_bus_mts as f64;
        let sim = sim_bytes as f64 * self.sim_bus_ma as f64 / self.sim_bus_mts as f64;
        base / sim
    }
}

/// Deadline-batching default: a quarter of the array read time.
pub const DEFAULT_BATCH_DEADLINE_NS: u64 = 4 * US;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_valid_for_both_modes() {
        ExperimentConfig::reference(Mode::Baseline).validate().unwrap();
        ExperimentConfig::reference(Mode::Sim).validate().unwrap();
    }

    #[test]
    fn off_grid_coverage_is_refused() {
        let mut c = ExperimentConfig::reference(Mode::Sim);
        c.cache_coverage = 0.3;
        assert!(matches!(c.validate(), Err(ConfigError::UnknownCoverage { .. })));
        c.cache_coverage = 0.75;
        c.validate().unwrap();
    }

    #[test]
    fn zero_coverage_means_no_cache_frames() {
        let mut c = ExperimentConfig::reference(Mode::Baseline);
        c.cache_coverage = 0.0;
        assert_eq!(c.cache_frames(), 0);
        c.cache_coverage = 0.25;
        assert_eq!(c.cache_frames(), 4096);
    }

    #[test]
    fn empty_workload_is_a_config_error() {
        let mut c = ExperimentConfig::reference(Mode::Sim);
        c.workload.op_count = 0;
        assert!(matches!(c.validate(), Err(ConfigError::EmptyWorkload)));
    }

    #[test]
    fn key_space_must_fit_the_index() {
        let mut c = ExperimentConfig::reference(Mode::Sim);
        c.workload.key_count = c.index_pages / 2 * 512 + 1;
        assert!(matches!(c.validate(), Err(ConfigError::TooManyKeys { .. })));
    }

    #[test]
    fn minimal_json_fills_in_reference_hardware() {
        let text = r#"{
            "cache_coverage": 0.5,
            "mode": "sim",
            "workload": {
                "key_count": 4096,
                "op_count": 1000,
                "read_ratio": 0.5,
                "distribution": "uniform",
                "seed": 3
            }
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.geometry, ChipGeometry::default());
        assert_eq!(c.index_pages, DEFAULT_INDEX_PAGES);
        assert_eq!(c.workload.warmup_fraction, 0.3);
        assert_eq!(c.scheduler, SchedulerChoice::Fcfs);
    }

    #[test]
    fn scheduler_choice_maps_onto_controller_params() {
        let d = SchedulerChoice::Deadline { deadline_ns: 9_000 };
        let p = d.controller_params(Some(25_000));
        assert_eq!(p.scheduler, SchedulerKind::Deadline);
        assert_eq!(p.batch_deadline_ns, 9_000);
        assert_eq!(p.power_budget_ua, Some(25_000));
        let f = SchedulerChoice::Fcfs.controller_params(None);
        assert_eq!(f.scheduler, SchedulerKind::Fcfs);
        assert_eq!(f.batch_deadline_ns, DEFAULT_BATCH_DEADLINE_NS);
    }

    #[test]
    fn transfer_preset_reproduces_the_expected_ratio() {
        let preset = TransferEnergyPreset::default();
        let ratio = preset.ratio(8192, 128);
        assert!((ratio - 22.1).abs() < 0.1, "ratio {ratio:.3}");
    }

    #[test]
    fn config_json_round_trips() {
        let c = ExperimentConfig::reference(Mode::Sim);
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(c, back);
    }
}

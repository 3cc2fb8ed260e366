//! Experiment execution: one configured run, seed-matched baseline/sim
//! pairs, and grid sweeps with one CSV row per cell. Failures carry the
//! seeds needed to replay them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::controller::{Engine, SetupError};
use crate::host::{Mode, OpenError, Record, Store, StoreError, StoreParams};
use crate::report::{round9, Report};
use crate::workload::{self, Distribution};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("device setup failed (device_seed {seed}): {source}")]
    Setup {
        seed: u64,
        #[source]
        source: SetupError,
    },
    #[error("index load failed (device_seed {seed}): {source}")]
    Load {
        seed: u64,
        #[source]
        source: OpenError,
    },
    #[error("run failed (workload seed {workload_seed}, device_seed {device_seed}): {source}")]
    Device {
        workload_seed: u64,
        device_seed: u64,
        #[source]
        source: StoreError,
    },
    #[error("could not persist outputs: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit code the CLI maps this failure to.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Deterministic value stored under each key at load time.
pub fn seed_value(key: u64) -> u64 {
    key.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17) ^ 0x5CA1_AB1E
}

/// Build the device and load the full key space into leaf pages.
pub fn build_store(config: &ExperimentConfig) -> Result<Store, RunError> {
    let engine = Engine::new(
        config.geometry,
        config.timings,
        config.currents,
        config.ecc,
        config.randomizer,
        config.controller_params(),
        config.index_pages,
        config.device_seed,
        config.log_events,
    )
    .map_err(|source| RunError::Setup { seed: config.device_seed, source })?;
    let records = (0..config.workload.key_count).map(|k| Record { key: k, value: seed_value(k) });
    Store::open(engine, records, StoreParams::new(config.mode, config.cache_frames()))
        .map_err(|source| RunError::Load { seed: config.device_seed, source })
}

/// Run one configured experiment to a [`Report`], persisting raw logs when
/// the config names an output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report, RunError> {
    config.validate()?;
    let mut store = build_store(config)?;
    let log = workload::run(&mut store, &config.workload).map_err(|source| RunError::Device {
        workload_seed: config.workload.seed,
        device_seed: config.device_seed,
        source,
    })?;
    let mut engine = store.into_engine();
    engine.finalize();
    let report = Report::build(config.mode, &log, engine.stats(), engine.ledger());

    if let Some(dir) = &config.output {
        persist(dir, config, &report, &log, &engine)?;
    }
    Ok(report)
}

fn persist(
    dir: &Path,
    config: &ExperimentConfig,
    report: &Report,
    log: &workload::RunLog,
    engine: &Engine,
) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    let mode = match config.mode {
        Mode::Baseline => "baseline",
        Mode::Sim => "sim",
    };
    fs::write(dir.join(format!("report_{mode}.json")), report.to_json())?;
    let mut ops = Vec::new();
    log.write_csv(&mut ops)?;
    fs::write(dir.join(format!("ops_{mode}.csv")), ops)?;
    if engine.log().enabled() {
        fs::write(dir.join(format!("events_{mode}.csv")), engine.log().to_csv())?;
    }
    Ok(())
}

/// Seed-matched baseline and search-offload runs of the same cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedReports {
    pub baseline: Report,
    pub sim: Report,
}

impl PairedReports {
    /// Throughput ratio, search path over baseline.
    pub fn speedup(&self) -> f64 {
        round9(self.sim.qps / self.baseline.qps)
    }

    /// Energy ratio, baseline over search path.
    pub fn energy_ratio(&self) -> f64 {
        round9(self.baseline.energy.total_aj as f64 / self.sim.energy.total_aj as f64)
    }

    /// Fractional median read-latency cut relative to the baseline; zero
    /// when either side measured no reads.
    pub fn latency_reduction(&self) -> f64 {
        match (&self.baseline.read_latency, &self.sim.read_latency) {
            (Some(b), Some(s)) if b.p50_ns > 0 => {
                round9((b.p50_ns as f64 - s.p50_ns as f64) / b.p50_ns as f64)
            }
            _ => 0.0,
        }
    }
}

pub fn run_pair(config: &ExperimentConfig) -> Result<PairedReports, RunError> {
    let mut baseline_cfg = config.clone();
    baseline_cfg.mode = Mode::Baseline;
    let mut sim_cfg = config.clone();
    sim_cfg.mode = Mode::Sim;
    let (baseline, sim) = rayon::join(
        || run_experiment(&baseline_cfg),
        || run_experiment(&sim_cfg),
    );
    Ok(PairedReports { baseline: baseline?, sim: sim? })
}

/// Cross product of workload axes over one base config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub base: ExperimentConfig,
    pub read_ratios: Vec<f64>,
    pub coverages: Vec<f64>,
    pub distributions: Vec<Distribution>,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid has an empty axis")]
    EmptyAxis,
    #[error("cell (read_ratio {read_ratio}, coverage {coverage}, {distribution}): {source}")]
    Cell {
        read_ratio: f64,
        coverage: f64,
        distribution: String,
        #[source]
        source: RunError,
    },
}

impl SweepError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SweepError::EmptyAxis => 2,
            SweepError::Cell { source, .. } => source.exit_code(),
        }
    }
}

fn distribution_label(d: Distribution) -> String {
    match d {
        Distribution::Uniform => "uniform".into(),
        Distribution::Zipf { alpha } => format!("zipf_{alpha}"),
    }
}

impl SweepGrid {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Malformed {
            path: path.to_path_buf(),
            source,
        })
    }

    fn cells(&self) -> Vec<ExperimentConfig> {
        let mut cells = Vec::new();
        for &read_ratio in &self.read_ratios {
            for &coverage in &self.coverages {
                for &distribution in &self.distributions {
                    let mut c = self.base.clone();
                    c.workload.read_ratio = read_ratio;
                    c.cache_coverage = coverage;
                    c.workload.distribution = distribution;
                    cells.push(c);
                }
            }
        }
        cells
    }
}

/// Run every cell in both modes and render the result matrix as CSV. Cells
/// execute in parallel; row order follows the grid axes, so equal grids give
/// byte-identical output.
pub fn sweep(grid: &SweepGrid) -> Result<String, SweepError> {
    if grid.read_ratios.is_empty() || grid.coverages.is_empty() || grid.distributions.is_empty() {
        return Err(SweepError::EmptyAxis);
    }
    let cells = grid.cells();
    let pairs: Vec<Result<PairedReports, RunError>> =
        cells.par_iter().map(run_pair).collect();

    let mut out = String::new();
    out.push_str("read_ratio,coverage,distribution,speedup,energy_ratio,latency_reduction");
    for prefix in ["baseline", "sim"] {
        for col in Report::csv_header().split(',') {
            let _ = write!(out, ",{prefix}_{col}");
        }
    }
    out.push('\n');

    for (config, pair) in cells.iter().zip(pairs) {
        let distribution = distribution_label(config.workload.distribution);
        let pair = pair.map_err(|source| SweepError::Cell {
            read_ratio: config.workload.read_ratio,
            coverage: config.cache_coverage,
            distribution: distribution.clone(),
            source,
        })?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            config.workload.read_ratio,
            config.cache_coverage,
            distribution,
            pair.speedup(),
            pair.energy_ratio(),
            pair.latency_reduction(),
            pair.baseline.csv_row(),
            pair.sim.csv_row(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::WorkloadSpec;

    fn tiny_config(mode: Mode) -> ExperimentConfig {
        let mut c = ExperimentConfig::reference(mode);
        c.index_pages = 64;
        c.cache_coverage = 0.25;
        c.workload = WorkloadSpec {
            key_count: 32 * 512,
            op_count: 300,
            read_ratio: 0.5,
            distribution: Distribution::Uniform,
            full_page_read_ratio: 0.0,
            warmup_fraction: 0.3,
            seed: 1234,
        };
        c
    }

    #[test]
    fn identical_configs_give_identical_report_bytes() {
        let c = tiny_config(Mode::Sim);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn paired_runs_share_the_workload_and_disagree_on_io() {
        let pair = run_pair(&tiny_config(Mode::Sim)).unwrap();
        assert_eq!(pair.baseline.ops_total, pair.sim.ops_total);
        assert!(pair.baseline.host_bytes > pair.sim.host_bytes);
        assert!(pair.speedup() > 0.0);
    }

    #[test]
    fn config_errors_exit_two_and_device_errors_exit_three() {
        let mut c = tiny_config(Mode::Sim);
        c.workload.op_count = 0;
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let mut c = tiny_config(Mode::Sim);
        c.index_pages = c.geometry.total_pages() * 2;
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let mut c = tiny_config(Mode::Sim);
        c.geometry.page_size = 8192;
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("device_seed"));
    }

    #[test]
    fn sweep_rows_follow_the_grid_and_rerun_identically() {
        let grid = SweepGrid {
            base: tiny_config(Mode::Sim),
            read_ratios: vec![0.2, 1.0],
            coverages: vec![0.25],
            distributions: vec![Distribution::Uniform],
        };
        let a = sweep(&grid).unwrap();
        let b = sweep(&grid).unwrap();
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0.2,0.25,uniform,"));
        assert!(lines[2].starts_with("1,0.25,uniform,"));

        let empty = SweepGrid { read_ratios: vec![], ..grid };
        assert!(matches!(sweep(&empty), Err(SweepError::EmptyAxis)));
    }

    #[test]
    fn outputs_land_in_the_named_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny_config(Mode::Baseline);
        c.output = Some(dir.path().to_path_buf());
        c.log_events = true;
        run_experiment(&c).unwrap();
        assert!(dir.path().join("report_baseline.json").is_file());
        assert!(dir.path().join("ops_baseline.csv").is_file());
        assert!(dir.path().join("events_baseline.csv").is_file());
    }
}

//! Fault-injection scenarios: JSON-described bit flips applied to stored
//! pages, so integrity experiments are exactly reproducible.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{ChipError, FlashDevice, PAGE_BITS};

/// One injection directive. `page` is the dense physical page index (the
/// order produced by `PhysPageAddr::pack`). Explicit `bit_positions` name
/// stored bits to flip; payload bits are `0..32768` and the 24 header bytes
/// follow as `32768..32960`. When `count` is set instead, that many distinct
/// random payload bits are drawn.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEntry {
    pub page: u64,
    #[serde(default)]
    pub bit_positions: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

#[derive(Debug, Error)]
pub enum FaultScenarioError {
    #[error("cannot read fault scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed fault scenario: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Load a scenario file: a JSON array of [`FaultEntry`].
pub fn load_fault_scenario(path: &Path) -> Result<Vec<FaultEntry>, FaultScenarioError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Flip the described bits on the device. Random positions (from `count`)
/// are drawn without replacement from the payload region.
pub fn apply_faults(
    device: &mut FlashDevice,
    entries: &[FaultEntry],
    rng: &mut impl Rng,
) -> Result<(), ChipError> {
    for entry in entries {
        let addr = device.geometry().unpack(entry.page);
        let mut positions = entry.bit_positions.clone();
        if let Some(n) = entry.count {
            let mut drawn = std::collections::BTreeSet::new();
            while (drawn.len() as u32) < n {
                drawn.insert(rng.gen_range(0..PAGE_BITS));
            }
            positions.extend(drawn);
        }
        device.inject_errors(addr, &positions)?;
    }
    Ok(())
}

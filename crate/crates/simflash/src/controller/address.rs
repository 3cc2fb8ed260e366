//! Static logical-to-physical striping: consecutive logical pages land on
//! consecutive channels, then dies, then planes, so sequential ids spread
//! across every independent unit before reusing one.

use thiserror::Error;

use crate::chip::{ChipGeometry, PhysPageAddr};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("logical page {page} outside provisioned range {provisioned}")]
pub struct OutOfRange {
    pub page: u64,
    pub provisioned: u64,
}

/// Home positions for the provisioned logical range. Runtime writes relocate
/// pages within their home plane; this map never changes.
#[derive(Clone, Debug)]
pub struct AddressMap {
    geometry: ChipGeometry,
    provisioned: u64,
}

impl AddressMap {
    pub fn new(geometry: ChipGeometry, provisioned: u64) -> Self {
        debug_assert!(provisioned <= geometry.total_pages());
        AddressMap { geometry, provisioned }
    }

    pub fn provisioned(&self) -> u64 {
        self.provisioned
    }

    pub fn map(&self, page: u64) -> Result<PhysPageAddr, OutOfRange> {
        if page >= self.provisioned {
            return Err(OutOfRange { page, provisioned: self.provisioned });
        }
        let g = &self.geometry;
        let channel = (page % g.channels as u64) as u32;
        let rest = page / g.channels as u64;
        let dies = g.dies_per_channel() as u64;
        let die_in_channel = (rest % dies) as u32;
        let rest = rest / dies;
        let plane = (rest % g.planes_per_die as u64) as u32;
        let page_in_plane = rest / g.planes_per_die as u64;
        Ok(PhysPageAddr {
            channel,
            package: die_in_channel / g.dies_per_package,
            die: die_in_channel % g.dies_per_package,
            plane,
            block: (page_in_plane / g.pages_per_block as u64) as u32,
            page: (page_in_plane % g.pages_per_block as u64) as u32,
        })
    }

    /// Pages already consumed in one plane by the provisioned range. A partial
    /// last stripe fills planes in logical order: channel first, then die,
    /// then plane, which is not plane-index order.
    pub fn pages_used_in_plane(&self, plane: u32) -> u64 {
        let g = &self.geometry;
        let stripe = g.total_planes() as u64;
        let full = self.provisioned / stripe;
        let extra = self.provisioned % stripe;
        let die = plane / g.planes_per_die;
        let plane_in_die = (plane % g.planes_per_die) as u64;
        let die_in_channel = (die % g.dies_per_channel()) as u64;
        let channel = g.channel_of_die(die) as u64;
        let stripe_pos = (plane_in_die * g.dies_per_channel() as u64 + die_in_channel)
            * g.channels as u64
            + channel;
        full + u64::from(stripe_pos < extra)
    }
}

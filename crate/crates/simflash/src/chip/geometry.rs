//! Device geometry and physical addressing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::page::PAGE_BYTES;

/// Shape of the simulated device. Defaults model a small SLC part: 8 channels
/// of one package each, two dies per package, one plane per die, 32 blocks of
/// 128 pages per plane, 4 KiB pages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipGeometry {
    pub channels: u32,
    pub packages_per_channel: u32,
    pub dies_per_package: u32,
    pub planes_per_die: u32,
    pub blocks_per_plane: u32,
    pub pages_per_block: u32,
    pub page_size: u32,
}

impl Default for ChipGeometry {
    fn default() -> Self {
        ChipGeometry {
            channels: 8,
            packages_per_channel: 1,
            dies_per_package: 2,
            planes_per_die: 1,
            blocks_per_plane: 32,
            pages_per_block: 128,
            page_size: PAGE_BYTES as u32,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("page_size must be {PAGE_BYTES}, got {0}")]
    PageSize(u32),
    #[error("geometry dimension `{0}` must be nonzero")]
    ZeroDimension(&'static str),
}

impl ChipGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.page_size != PAGE_BYTES as u32 {
            return Err(GeometryError::PageSize(self.page_size));
        }
        for (name, v) in [
            ("channels", self.channels),
            ("packages_per_channel", self.packages_per_channel),
            ("dies_per_package", self.dies_per_package),
            ("planes_per_die", self.planes_per_die),
            ("blocks_per_plane", self.blocks_per_plane),
            ("pages_per_block", self.pages_per_block),
        ] {
            if v == 0 {
                return Err(GeometryError::ZeroDimension(name));
            }
        }
        Ok(())
    }

    /// Packages on one channel bus share that bus; dies within a package are
    /// independent command targets.
    pub fn dies_per_channel(&self) -> u32 {
        self.packages_per_channel * self.dies_per_package
    }

    pub fn total_dies(&self) -> u32 {
        self.channels * self.dies_per_channel()
    }

    pub fn total_planes(&self) -> u32 {
        self.total_dies() * self.planes_per_die
    }

    pub fn pages_per_plane(&self) -> u32 {
        self.blocks_per_plane * self.pages_per_block
    }

    pub fn total_pages(&self) -> u64 {
        self.total_planes() as u64 * self.pages_per_plane() as u64
    }

    pub fn plane_index(&self, addr: PhysPageAddr) -> u32 {
        let die = (addr.channel * self.packages_per_channel + addr.package)
            * self.dies_per_package
            + addr.die;
        die * self.planes_per_die + addr.plane
    }

    pub fn die_index(&self, addr: PhysPageAddr) -> u32 {
        self.plane_index(addr) / self.planes_per_die
    }

    pub fn channel_of_die(&self, die: u32) -> u32 {
        die / self.dies_per_channel()
    }

    /// Chip (package) index owning a die; the peak-current budget is enforced
    /// per chip.
    pub fn chip_of_die(&self, die: u32) -> u32 {
        die / self.dies_per_package
    }

    pub fn total_chips(&self) -> u32 {
        self.channels * self.packages_per_channel
    }

    /// Inverse of [`PhysPageAddr::pack`]. The index must be below
    /// [`ChipGeometry::total_pages`].
    pub fn unpack(&self, index: u64) -> PhysPageAddr {
        debug_assert!(index < self.total_pages());
        let page = (index % self.pages_per_block as u64) as u32;
        let rest = index / self.pages_per_block as u64;
        let block = (rest % self.blocks_per_plane as u64) as u32;
        let plane_idx = (rest / self.blocks_per_plane as u64) as u32;
        let plane = plane_idx % self.planes_per_die;
        let die_idx = plane_idx / self.planes_per_die;
        let die = die_idx % self.dies_per_package;
        let pkg_idx = die_idx / self.dies_per_package;
        PhysPageAddr {
            channel: pkg_idx / self.packages_per_channel,
            package: pkg_idx % self.packages_per_channel,
            die,
            plane,
            block,
            page,
        }
    }

    pub fn contains(&self, addr: PhysPageAddr) -> bool {
        addr.channel < self.channels
            && addr.package < self.packages_per_channel
            && addr.die < self.dies_per_package
            && addr.plane < self.planes_per_die
            && addr.block < self.blocks_per_plane
            && addr.page < self.pages_per_block
    }
}

/// Physical page coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhysPageAddr {
    pub channel: u32,
    pub package: u32,
    pub die: u32,
    pub plane: u32,
    pub block: u32,
    pub page: u32,
}

impl PhysPageAddr {
    pub fn block_addr(&self) -> PhysBlockAddr {
        PhysBlockAddr {
            channel: self.channel,
            package: self.package,
            die: self.die,
            plane: self.plane,
            block: self.block,
        }
    }

    /// Dense per-device page number; doubles as the randomization seed input,
    /// so two pages with identical content at different addresses store
    /// different bits.
    pub fn pack(&self, geom: &ChipGeometry) -> u64 {
        let plane = geom.plane_index(*self) as u64;
        (plane * geom.blocks_per_plane as u64 + self.block as u64) * geom.pages_per_block as u64
            + self.page as u64
    }
}

/// Physical block coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhysBlockAddr {
    pub channel: u32,
    pub package: u32,
    pub die: u32,
    pub plane: u32,
    pub block: u32,
}

impl PhysBlockAddr {
    pub fn page(&self, page: u32) -> PhysPageAddr {
        PhysPageAddr {
            channel: self.channel,
            package: self.package,
            die: self.die,
            plane: self.plane,
            block: self.block,
            page,
        }
    }
}

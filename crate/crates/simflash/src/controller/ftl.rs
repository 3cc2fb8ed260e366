//! Minimal flash translation: a dynamic page table over the static striping,
//! plus per-plane append-point allocators. Updated pages relocate within
//! their home plane; a block whose pages are all superseded is erased and
//! reused on demand. There is no background garbage collection. When a plane
//! runs out of append room and no block is fully stale, the controller
//! compacts on demand: each plane withholds one erased block, the sealed
//! block with the fewest live pages is migrated into it, and the emptied
//! victim becomes the next reserve.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::chip::{ChipGeometry, PhysBlockAddr, PhysPageAddr};

use super::address::{AddressMap, OutOfRange};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("plane {plane} has no erased or reclaimable block left")]
pub struct OutOfSpace {
    pub plane: u32,
}

/// A reserved program target. When `needs_erase` is set, the named block must
/// be erased before the program lands; the allocator has already claimed page
/// 0 of it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub addr: PhysPageAddr,
    pub needs_erase: Option<PhysBlockAddr>,
}

struct PlaneAlloc {
    /// Erased blocks not yet written, lowest first.
    free: VecDeque<u32>,
    /// Block currently being appended to, with its next free page.
    open: Option<(u32, u32)>,
    /// Fully appended blocks.
    sealed: BTreeSet<u32>,
    /// Referenced (stored or reserved) pages per block.
    live: Vec<u32>,
    /// Erased block withheld from appends as the compaction destination.
    reserve: Option<u32>,
    /// Migration in progress, if any.
    compacting: Option<Compacting>,
}

struct Compacting {
    victim: u32,
    reserve: u32,
    /// Any page address inside the plane, for rebuilding block addresses.
    template: PhysPageAddr,
    /// Pages claimed in the reserve block by the planned migrations.
    fill: u32,
}

impl PlaneAlloc {
    fn reclaimable(&self) -> Option<u32> {
        self.sealed.iter().copied().find(|&b| self.live[b as usize] == 0)
    }
}

/// One page move of a planned compaction: read `source`, program the image
/// to `dest`, and swing `logical` over if nothing rewrote it meanwhile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Relocation {
    pub logical: u64,
    pub source: PhysPageAddr,
    pub dest: PhysPageAddr,
}

pub struct Ftl {
    geometry: ChipGeometry,
    map: AddressMap,
    table: Vec<PhysPageAddr>,
    planes: Vec<PlaneAlloc>,
}

impl Ftl {
    /// Set up for a freshly bulk-loaded index: logical pages sit at their
    /// home addresses, the partially filled block of each plane (if any) is
    /// the append point, and the rest of the plane is free.
    pub fn new(geometry: ChipGeometry, provisioned: u64) -> Self {
        let map = AddressMap::new(geometry, provisioned);
        let table = (0..provisioned).map(|id| map.map(id).unwrap()).collect();
        let ppb = geometry.pages_per_block;
        let planes = (0..geometry.total_planes())
            .map(|p| {
                let used = map.pages_used_in_plane(p) as u32;
                let full_blocks = used / ppb;
                let partial = used % ppb;
                let mut live = vec![0u32; geometry.blocks_per_plane as usize];
                let mut sealed = BTreeSet::new();
                for b in 0..full_blocks {
                    live[b as usize] = ppb;
                    sealed.insert(b);
                }
                let mut open = None;
                let mut first_free = full_blocks;
                if partial > 0 {
                    live[full_blocks as usize] = partial;
                    open = Some((full_blocks, partial));
                    first_free = full_blocks + 1;
                }
                let mut free: VecDeque<u32> = (first_free..geometry.blocks_per_plane).collect();
                let reserve = free.pop_back();
                PlaneAlloc { free, open, sealed, live, reserve, compacting: None }
            })
            .collect();
        Ftl { geometry, map, table, planes }
    }

    pub fn provisioned(&self) -> u64 {
        self.map.provisioned()
    }

    pub fn home(&self, logical: u64) -> Result<PhysPageAddr, OutOfRange> {
        self.map.map(logical)
    }

    /// Current physical location of a logical page.
    pub fn resolve(&self, logical: u64) -> Result<PhysPageAddr, OutOfRange> {
        self.table
            .get(logical as usize)
            .copied()
            .ok_or(OutOfRange { page: logical, provisioned: self.map.provisioned() })
    }

    /// Claim the next program target in a logical page's home plane. The
    /// reservation immediately counts as live so the block cannot be
    /// reclaimed while the program is in flight.
    pub fn reserve_for(&mut self, logical: u64) -> Result<Reservation, OutOfSpace> {
        let current = self.resolve(logical).expect("reserve for unprovisioned page");
        let plane_idx = self.geometry.plane_index(current);
        let ppb = self.geometry.pages_per_block;
        let alloc = &mut self.planes[plane_idx as usize];

        if let Some((block, next)) = alloc.open {
            alloc.live[block as usize] += 1;
            let addr = Self::page_in_plane(current, block, next);
            if next + 1 == ppb {
                alloc.open = None;
                alloc.sealed.insert(block);
            } else {
                alloc.open = Some((block, next + 1));
            }
            return Ok(Reservation { addr, needs_erase: None });
        }
        if let Some(block) = alloc.free.pop_front() {
            alloc.live[block as usize] = 1;
            alloc.open = Some((block, 1));
            return Ok(Reservation {
                addr: Self::page_in_plane(current, block, 0),
                needs_erase: None,
            });
        }
        if let Some(block) = alloc.reclaimable() {
            alloc.sealed.remove(&block);
            alloc.live[block as usize] = 1;
            alloc.open = Some((block, 1));
            let addr = Self::page_in_plane(current, block, 0);
            return Ok(Reservation { addr, needs_erase: Some(addr.block_addr()) });
        }
        Err(OutOfSpace { plane: plane_idx })
    }

    /// Point the table at a completed relocation and release the superseded
    /// page. Returns the old address so the caller can retire it on media.
    pub fn install(&mut self, logical: u64, new_addr: PhysPageAddr) -> PhysPageAddr {
        let old = self.table[logical as usize];
        debug_assert_eq!(
            self.geometry.plane_index(old),
            self.geometry.plane_index(new_addr),
            "relocation must stay in the home plane"
        );
        self.table[logical as usize] = new_addr;
        let plane = self.geometry.plane_index(old);
        let live = &mut self.planes[plane as usize].live[old.block as usize];
        debug_assert!(*live > 0);
        *live -= 1;
        old
    }

    /// Release a reservation without installing anything. The slot stays
    /// consumed until its block is reclaimed, but nothing points at it, so
    /// the block can be erased as soon as its remaining pages go stale.
    pub fn abandon(&mut self, reserved: PhysPageAddr) {
        let plane = self.geometry.plane_index(reserved);
        let live = &mut self.planes[plane as usize].live[reserved.block as usize];
        debug_assert!(*live > 0);
        *live -= 1;
    }

    /// Plan a compaction for a plane that has no append room left. Picks the
    /// sealed block with the fewest live pages, all of them installed (a
    /// block with an in-flight reservation cannot be emptied), and claims one
    /// reserve-block page per move. Returns `None` when the plane has no
    /// reserve or no block whose migration would gain anything.
    pub fn plan_compaction(&mut self, plane: u32) -> Option<Vec<Relocation>> {
        let alloc = &self.planes[plane as usize];
        let reserve = alloc.reserve?;
        let mut by_block: BTreeMap<u32, Vec<(u64, PhysPageAddr)>> = BTreeMap::new();
        for (logical, &addr) in self.table.iter().enumerate() {
            if self.geometry.plane_index(addr) == plane && alloc.sealed.contains(&addr.block) {
                by_block.entry(addr.block).or_default().push((logical as u64, addr));
            }
        }
        let ppb = self.geometry.pages_per_block;
        let victim = alloc
            .sealed
            .iter()
            .copied()
            .filter(|&b| {
                let installed = by_block.get(&b).map_or(0, Vec::len) as u32;
                installed == alloc.live[b as usize] && installed > 0 && installed < ppb
            })
            .min_by_key(|&b| alloc.live[b as usize])?;
        let pages = by_block.remove(&victim).expect("victim had live pages");
        let template = pages[0].1;
        let alloc = &mut self.planes[plane as usize];
        alloc.reserve = None;
        debug_assert_eq!(alloc.live[reserve as usize], 0);
        let moves: Vec<Relocation> = pages
            .into_iter()
            .enumerate()
            .map(|(i, (logical, source))| {
                alloc.live[reserve as usize] += 1;
                Relocation { logical, source, dest: Self::page_in_plane(template, reserve, i as u32) }
            })
            .collect();
        alloc.compacting = Some(Compacting { victim, reserve, template, fill: moves.len() as u32 });
        Some(moves)
    }

    /// Close out a planned compaction once every move has either installed
    /// or been abandoned. The consumed reserve block becomes the append
    /// point. If the victim emptied it becomes the next reserve and its
    /// address is returned so the caller can erase it; a victim still
    /// holding pages (a migration read failed) stays sealed and the plane
    /// loses its reserve.
    pub fn finish_compaction(&mut self, plane: u32) -> Option<PhysBlockAddr> {
        let alloc = &mut self.planes[plane as usize];
        let done = alloc.compacting.take().expect("no compaction in progress");
        if done.fill < self.geometry.pages_per_block && alloc.open.is_none() {
            alloc.open = Some((done.reserve, done.fill));
        } else {
            alloc.sealed.insert(done.reserve);
        }
        if alloc.live[done.victim as usize] == 0 {
            alloc.sealed.remove(&done.victim);
            alloc.reserve = Some(done.victim);
            Some(Self::page_in_plane(done.template, done.victim, 0).block_addr())
        } else {
            None
        }
    }

    /// Erased and never-reopened blocks left in a plane, for tests and space
    /// diagnostics.
    pub fn free_blocks(&self, plane: u32) -> usize {
        self.planes[plane as usize].free.len()
    }

    fn page_in_plane(template: PhysPageAddr, block: u32, page: u32) -> PhysPageAddr {
        PhysPageAddr { block, page, ..template }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_geom() -> ChipGeometry {
        ChipGeometry {
            channels: 2,
            dies_per_package: 1,
            blocks_per_plane: 3,
            pages_per_block: 4,
            ..Default::default()
        }
    }

    #[test]
    fn fresh_table_equals_home_map() {
        let g = small_geom();
        let ftl = Ftl::new(g, 10);
        for id in 0..10 {
            assert_eq!(ftl.resolve(id).unwrap(), ftl.home(id).unwrap());
        }
        assert!(ftl.resolve(10).is_err());
    }

    #[test]
    fn reservations_append_within_home_plane() {
        let g = small_geom();
        // 2 planes; 10 pages -> 5 per plane: block0 full, block1 holds 1
        let mut ftl = Ftl::new(g, 10);
        let r = ftl.reserve_for(0).unwrap();
        assert_eq!(g.plane_index(r.addr), g.plane_index(ftl.home(0).unwrap()));
        assert_eq!((r.addr.block, r.addr.page), (1, 1));
        assert_eq!(r.needs_erase, None);
        let r2 = ftl.reserve_for(0).unwrap();
        assert_eq!((r2.addr.block, r2.addr.page), (1, 2));
    }

    #[test]
    fn install_moves_table_and_frees_old_slot() {
        let g = small_geom();
        let mut ftl = Ftl::new(g, 10);
        let old = ftl.resolve(0).unwrap();
        let r = ftl.reserve_for(0).unwrap();
        let released = ftl.install(0, r.addr);
        assert_eq!(released, old);
        assert_eq!(ftl.resolve(0).unwrap(), r.addr);
    }

    #[test]
    fn exhaustion_reclaims_fully_stale_blocks_then_errors() {
        let g = small_geom();
        // plane 0 sees logical pages 0,2,4,6: exactly block 0, blocks 1-2 free
        let mut ftl = Ftl::new(g, 8);
        // rewriting logical 0 walks the append point through blocks 1 and 2
        for _ in 0..8 {
            let r = ftl.reserve_for(0).unwrap();
            assert_eq!(r.needs_erase, None);
            ftl.install(0, r.addr);
        }
        assert_eq!(ftl.free_blocks(0), 0);
        // block 1 is now fully superseded and gets erased for reuse
        let r = ftl.reserve_for(0).unwrap();
        assert_eq!(r.needs_erase, Some(r.addr.block_addr()));
        assert_eq!((r.addr.block, r.addr.page), (1, 0));
        ftl.install(0, r.addr);
        // reserving without installing pins every remaining page until the
        // plane runs dry: 3 left in block 1, then block 2 reclaims for 4 more
        for i in 0..7 {
            let r = ftl.reserve_for(0).unwrap();
            assert_eq!(r.needs_erase.is_some(), i == 3, "step {i}");
        }
        assert_eq!(ftl.reserve_for(0), Err(OutOfSpace { plane: 0 }));
    }
}

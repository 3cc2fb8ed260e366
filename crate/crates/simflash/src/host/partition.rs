//! Partitioned table scans. A partition id written into a fixed bit slice of
//! every row key turns partition selection into one equality probe, and the
//! chip ships back only the 64-byte chunks that hold at least one member.

use thiserror::Error;

use crate::controller::{CombineExpr, Engine, OpError, OpOutcome, OutOfRange, PageScanResult, Probe};

use super::row::{build_equality_query, FieldSpec, ValueOverflow};

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error(transparent)]
    BadId(#[from] ValueOverflow),
    #[error(transparent)]
    OutOfRange(#[from] OutOfRange),
    #[error(transparent)]
    Device(OpError),
}

/// Equality probe selecting one partition by its id slice.
pub fn partition_probe(slice: FieldSpec, partition_id: u64) -> Result<Probe, ValueOverflow> {
    build_equality_query(slice, partition_id)
}

/// Match one partition across `pages` and gather the member chunks. The
/// engine must be otherwise idle; the call drives it to completion.
pub fn partition_gather(
    engine: &mut Engine,
    pages: &[u64],
    slice: FieldSpec,
    partition_id: u64,
) -> Result<Vec<PageScanResult>, PartitionError> {
    let probe = partition_probe(slice, partition_id)?;
    let op = engine.submit_scan(pages, &[probe], CombineExpr::probe(0))?;
    loop {
        let done = engine
            .run_until_completion()
            .expect("a submitted scan always completes");
        if done.op_id != op {
            continue;
        }
        return match done.outcome {
            OpOutcome::Scan(Ok(results)) => Ok(results),
            OpOutcome::Scan(Err(e)) => Err(PartitionError::Device(e)),
            other => unreachable!("scan op resolved as {other:?}"),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::{
        ChipGeometry, TimingParams, CHUNK_BYTES, PAGE_BYTES, SLOTS_PER_PAGE, SLOT_BYTES,
    };
    use crate::controller::{ControllerParams, CurrentParams, Engine};
    use crate::host::row::encode_row;
    use crate::reliability::{EccParams, Randomizer};

    const PART: FieldSpec = FieldSpec { bit_offset: 8, width: 4 };
    const PAYLOAD: FieldSpec = FieldSpec { bit_offset: 16, width: 48 };

    fn engine() -> Engine {
        let geometry = ChipGeometry {
            channels: 2,
            packages_per_channel: 1,
            dies_per_package: 2,
            planes_per_die: 1,
            blocks_per_plane: 8,
            pages_per_block: 16,
            page_size: PAGE_BYTES as u32,
        };
        Engine::new(
            geometry,
            TimingParams::default(),
            CurrentParams::default(),
            EccParams::default(),
            Randomizer::default(),
            ControllerParams::default(),
            64,
            7,
            false,
        )
        .unwrap()
    }

    fn load_partitioned_pages(engine: &mut Engine, pages: u64) -> Vec<[u8; PAGE_BYTES]> {
        let mut images = Vec::new();
        for p in 0..pages {
            let mut image = [0u8; PAGE_BYTES];
            for slot in 0..SLOTS_PER_PAGE {
                let id = ((slot / 8) % 16) as u64;
                let key = encode_row(&[
                    (PART, id),
                    (PAYLOAD, p * SLOTS_PER_PAGE as u64 + slot as u64),
                ])
                .unwrap();
                image[slot * SLOT_BYTES..(slot + 1) * SLOT_BYTES]
                    .copy_from_slice(&key.to_be_bytes());
            }
            engine.bulk_load_page(p, &image).unwrap();
            images.push(image);
        }
        images
    }

    fn member_slots(image: &[u8; PAGE_BYTES], id: u64) -> Vec<usize> {
        (0..SLOTS_PER_PAGE)
            .filter(|&slot| {
                let mut raw = [0u8; SLOT_BYTES];
                raw.copy_from_slice(&image[slot * SLOT_BYTES..(slot + 1) * SLOT_BYTES]);
                PART.extract(u64::from_be_bytes(raw)) == id
            })
            .collect()
    }

    #[test]
    fn gathers_exactly_the_member_chunks() {
        let mut engine = engine();
        let images = load_partitioned_pages(&mut engine, 3);
        let pages = [0u64, 1, 2];

        let results = partition_gather(&mut engine, &pages, PART, 5).unwrap();
        assert_eq!(results.len(), 3);
        for result in &results {
            let image = &images[result.logical as usize];
            let want = member_slots(image, 5);
            let got: Vec<usize> = result.slots.iter_ones().collect();
            assert_eq!(got, want);

            let mut wanted: Vec<u8> = want.iter().map(|&slot| (slot / 8) as u8).collect();
            wanted.dedup();
            let sent: Vec<u8> = result.chunks.iter().map(|&(c, _)| c).collect();
            assert_eq!(sent, wanted, "page {}", result.logical);

            for &(chunk, data) in &result.chunks {
                let base = chunk as usize * CHUNK_BYTES;
                assert_eq!(&data[..], &image[base..base + CHUNK_BYTES]);
            }
        }
    }

    #[test]
    fn partitions_tile_the_page_without_overlap() {
        let mut engine = engine();
        load_partitioned_pages(&mut engine, 1);

        let mut seen = vec![0u32; SLOTS_PER_PAGE];
        let mut chunk_owners = vec![0u32; 64];
        for id in 0..16u64 {
            let results = partition_gather(&mut engine, &[0], PART, id).unwrap();
            for slot in results[0].slots.iter_ones() {
                seen[slot] += 1;
            }
            for &(chunk, _) in &results[0].chunks {
                chunk_owners[chunk as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1), "every slot in exactly one partition");
        assert!(chunk_owners.iter().all(|&n| n == 1), "chunks shipped once per owner");
    }

    #[test]
    fn absent_partition_moves_only_bitmaps() {
        let mut engine = engine();
        let mut image = [0u8; PAGE_BYTES];
        for slot in 0..SLOTS_PER_PAGE {
            let key = encode_row(&[(PART, 3), (PAYLOAD, slot as u64)]).unwrap();
            image[slot * SLOT_BYTES..(slot + 1) * SLOT_BYTES]
                .copy_from_slice(&key.to_be_bytes());
        }
        engine.bulk_load_page(0, &image).unwrap();

        let before = engine.stats().host_bytes;
        let results = partition_gather(&mut engine, &[0], PART, 9).unwrap();
        assert!(results[0].slots.is_empty());
        assert!(results[0].chunks.is_empty());
        assert_eq!(engine.stats().host_bytes - before, 64);
    }

    #[test]
    fn single_partition_owning_the_page_ships_the_whole_page() {
        let mut engine = engine();
        let mut image = [0u8; PAGE_BYTES];
        for slot in 0..SLOTS_PER_PAGE {
            let key = encode_row(&[(PART, 3), (PAYLOAD, slot as u64)]).unwrap();
            image[slot * SLOT_BYTES..(slot + 1) * SLOT_BYTES]
                .copy_from_slice(&key.to_be_bytes());
        }
        engine.bulk_load_page(0, &image).unwrap();

        let before = engine.stats().host_bytes;
        let results = partition_gather(&mut engine, &[0], PART, 3).unwrap();
        assert_eq!(results[0].chunks.len(), 64);
        assert_eq!(results[0].slots.count_ones(), SLOTS_PER_PAGE as u32);
        assert_eq!(engine.stats().host_bytes - before, 64 + PAGE_BYTES as u64);
    }

    #[test]
    fn gathered_data_never_exceeds_the_page_itself() {
        let mut engine = engine();
        load_partitioned_pages(&mut engine, 2);
        for id in 0..16u64 {
            let results = partition_gather(&mut engine, &[0, 1], PART, id).unwrap();
            for r in &results {
                assert!(r.chunks.len() * CHUNK_BYTES <= PAGE_BYTES);
            }
        }
    }

    #[test]
    fn oversized_partition_id_is_refused() {
        let mut engine = engine();
        load_partitioned_pages(&mut engine, 1);
        let err = partition_gather(&mut engine, &[0], PART, 16).unwrap_err();
        assert!(matches!(err, PartitionError::BadId(_)));
    }
}

//! Packing table rows into 64-bit keys so equality filters become a single
//! masked comparison. A field lives at a fixed bit range counted from the
//! most significant bit, so byte-wise big-endian comparison of whole slots
//! agrees with integer comparison of fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Probe;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    /// Offset of the field's first bit, counted from the key's MSB.
    pub bit_offset: u32,
    pub width: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("value {value:#x} does not fit in {width} bits")]
pub struct ValueOverflow {
    pub value: u64,
    pub width: u32,
}

impl FieldSpec {
    pub fn new(bit_offset: u32, width: u32) -> Self {
        assert!(width >= 1 && bit_offset + width <= 64, "field must fit in a 64-bit key");
        FieldSpec { bit_offset, width }
    }

    fn shift(&self) -> u32 {
        64 - self.bit_offset - self.width
    }

    /// All-ones over exactly this field's bits.
    pub fn mask(&self) -> u64 {
        let ones = if self.width == 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        };
        ones << self.shift()
    }

    pub fn max_value(&self) -> u64 {
        if self.width == 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        }
    }

    /// Position a field value inside an otherwise-zero key.
    pub fn place(&self, value: u64) -> Result<u64, ValueOverflow> {
        if value > self.max_value() {
            return Err(ValueOverflow { value, width: self.width });
        }
        Ok(value << self.shift())
    }

    pub fn extract(&self, key: u64) -> u64 {
        (key & self.mask()) >> self.shift()
    }

    /// The sub-field covering this field's `count` most significant bits.
    pub fn top_bits(&self, count: u32) -> FieldSpec {
        assert!(count >= 1 && count <= self.width);
        FieldSpec::new(self.bit_offset, count)
    }
}

/// Pack one value per field into a key. Fields must not overlap.
pub fn encode_row(fields: &[(FieldSpec, u64)]) -> Result<u64, ValueOverflow> {
    let mut key = 0u64;
    let mut covered = 0u64;
    for &(spec, value) in fields {
        debug_assert_eq!(covered & spec.mask(), 0, "fields overlap");
        covered |= spec.mask();
        key |= spec.place(value)?;
    }
    Ok(key)
}

pub fn decode_row(key: u64, fields: &[FieldSpec]) -> Vec<u64> {
    fields.iter().map(|spec| spec.extract(key)).collect()
}

/// An equality filter: the value at its position, a mask over exactly the
/// field's bits.
pub fn build_equality_query(field: FieldSpec, value: u64) -> Result<Probe, ValueOverflow> {
    Ok(Probe {
        key: field.place(value)?,
        mask: field.mask(),
    })
}

//! 2-bit ternary codes, four per byte.
//!
//! Code `00` is 0, `01` is +1, `11` is -1. Code `10` is reserved and
//! rejected. Element `i` lives in bits `2*(i%4)..2*(i%4)+2` of byte `i/4`,
//! and unused trailing bits of the last byte are zero.

use crate::error::{FgqError, Result};

const CODE_ZERO: u8 = 0b00;
const CODE_POS: u8 = 0b01;
const CODE_NEG: u8 = 0b11;
const CODE_RESERVED: u8 = 0b10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PackedTernary {
    element_count: usize,
    bytes: Vec<u8>,
}

#[inline]
fn encode(v: i8) -> Option<u8> {
    match v {
        0 => Some(CODE_ZERO),
        1 => Some(CODE_POS),
        -1 => Some(CODE_NEG),
        _ => None,
    }
}

#[inline]
fn decode(code: u8) -> i8 {
    match code {
        CODE_ZERO => 0,
        CODE_POS => 1,
        CODE_NEG => -1,
        _ => unreachable!("reserved code rejected at construction"),
    }
}

pub const fn packed_len(element_count: usize) -> usize {
    element_count.div_ceil(4)
}

/// Packs a sign sequence; any value outside {-1, 0, +1} is a domain error.
pub fn pack_ternary(signs: &[i8]) -> Result<PackedTernary> {
    let mut bytes = vec![0u8; packed_len(signs.len())];
    for (i, &v) in signs.iter().enumerate() {
        let code = encode(v)
            .ok_or_else(|| FgqError::Domain(format!("sign {v} at index {i} is not ternary")))?;
        bytes[i / 4] |= code << (2 * (i % 4));
    }
    Ok(PackedTernary {
        element_count: signs.len(),
        bytes,
    })
}

impl PackedTernary {
    /// Validates raw packed bytes: length, reserved codes and pad bits.
    pub fn from_bytes(element_count: usize, bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != packed_len(element_count) {
            return Err(FgqError::format(format!(
                "{element_count} ternary codes need {} bytes, got {}",
                packed_len(element_count),
                bytes.len()
            )));
        }
        for (i, &b) in bytes.iter().enumerate() {
            for slot in 0..4 {
                let idx = i * 4 + slot;
                let code = (b >> (2 * slot)) & 0b11;
                if idx >= element_count {
                    if code != 0 {
                        return Err(FgqError::format(format!(
                            "nonzero pad bits in final ternary byte {i}"
                        )));
                    }
                } else if code == CODE_RESERVED {
                    return Err(FgqError::format(format!(
                        "reserved ternary code 10 at element {idx}"
                    )));
                }
            }
        }
        Ok(Self {
            element_count,
            bytes,
        })
    }

    pub fn len(&self) -> usize {
        self.element_count
    }

    pub fn is_empty(&self) -> bool {
        self.element_count == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        assert!(i < self.element_count, "index {i} out of range");
        decode((self.bytes[i / 4] >> (2 * (i % 4))) & 0b11)
    }

    pub fn unpack(&self) -> Vec<i8> {
        (0..self.element_count).map(|i| self.get(i)).collect()
    }
}

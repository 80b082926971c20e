//! LSB-first bit packing of fixed-width sign-magnitude integers.

use crate::error::{Error, Result};

/// Bits needed to store `value` in sign-magnitude form: one sign bit plus
/// the magnitude, or zero bits for an all-zero block.
pub fn sign_magnitude_width(max_magnitude: u128) -> u8 {
    if max_magnitude == 0 {
        0
    } else {
        1 + (128 - max_magnitude.leading_zeros()) as u8
    }
}

pub fn packed_len(count: usize, bit_width: u8) -> usize {
    (count * bit_width as usize).div_ceil(8)
}

pub fn pack(values: &[i128], bit_width: u8) -> Vec<u8> {
    let mut out = vec![0u8; packed_len(values.len(), bit_width)];
    if bit_width == 0 {
        return out;
    }
    let mag_bits = bit_width as u32 - 1;
    let mut pos = 0usize;
    for &v in values {
        let word = (v.unsigned_abs() << 1) | u128::from(v < 0);
        debug_assert!(mag_bits >= 127 || v.unsigned_abs() >> mag_bits == 0);
        for bit in 0..bit_width as usize {
            if (word >> bit) & 1 == 1 {
                out[(pos + bit) / 8] |= 1 << ((pos + bit) % 8);
            }
        }
        pos += bit_width as usize;
    }
    out
}

pub fn unpack(payload: &[u8], count: usize, bit_width: u8) -> Result<Vec<i128>> {
    if payload.len() != packed_len(count, bit_width) {
        return Err(Error::Decode(format!(
            "payload of {} bytes cannot hold {count} values of {bit_width} bits",
            payload.len()
        )));
    }
    if bit_width == 0 {
        return Ok(vec![0; count]);
    }
    if bit_width > 128 {
        return Err(Error::Decode(format!("bit width {bit_width} exceeds 128")));
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut word: u128 = 0;
        for bit in 0..bit_width as usize {
            let b = (payload[(pos + bit) / 8] >> ((pos + bit) % 8)) & 1;
            word |= u128::from(b) << bit;
        }
        pos += bit_width as usize;
        let magnitude = (word >> 1) as i128;
        out.push(if word & 1 == 1 { -magnitude } else { magnitude });
    }
    Ok(out)
}

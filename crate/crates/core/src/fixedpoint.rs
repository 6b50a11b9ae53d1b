//! Dynamic fixed point: signed integer mantissas sharing one power-of-two
//! exponent, `value = mantissa * 2^-frac_bits`.
//!
//! Rounding is round-half-to-even and out-of-range values saturate to the
//! mantissa limits. The shared exponent is chosen so the largest magnitude
//! fits without saturating beyond rounding.

use serde::{Deserialize, Serialize};

use crate::error::{FgqError, Result};
use crate::num::Real;

/// Mantissa widths supported by the emulator and the file format.
pub const SUPPORTED_BITS: [u8; 2] = [4, 8];

pub fn check_bits(bits: u8) -> Result<()> {
    if SUPPORTED_BITS.contains(&bits) {
        Ok(())
    } else {
        Err(FgqError::Domain(format!(
            "{bits}-bit fixed point unsupported (use 4 or 8)"
        )))
    }
}

#[inline]
pub const fn mantissa_min(bits: u8) -> i32 {
    -(1 << (bits - 1))
}

#[inline]
pub const fn mantissa_max(bits: u8) -> i32 {
    (1 << (bits - 1)) - 1
}

#[inline]
fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DfpTensor {
    bits: u8,
    frac_bits: i32,
    mantissas: Vec<i8>,
}

impl DfpTensor {
    /// Builds a tensor from raw mantissas, checking they fit in `bits`.
    pub fn from_mantissas(bits: u8, frac_bits: i32, mantissas: Vec<i8>) -> Result<Self> {
        check_bits(bits)?;
        let (lo, hi) = (mantissa_min(bits), mantissa_max(bits));
        if let Some(i) = mantissas
            .iter()
            .position(|&m| (m as i32) < lo || (m as i32) > hi)
        {
            return Err(FgqError::Domain(format!(
                "mantissa {} at {i} outside {bits}-bit range",
                mantissas[i]
            )));
        }
        Ok(Self {
            bits,
            frac_bits,
            mantissas,
        })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn frac_bits(&self) -> i32 {
        self.frac_bits
    }

    pub fn mantissas(&self) -> &[i8] {
        &self.mantissas
    }

    pub fn len(&self) -> usize {
        self.mantissas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mantissas.is_empty()
    }

    /// Weight of one mantissa unit, `2^-frac_bits`.
    pub fn ulp(&self) -> f64 {
        pow2(-self.frac_bits)
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.mantissas[i] as f64 * self.ulp()
    }
}

/// Shared exponent for `values`: `(bits - 1) - E` with `E` the smallest
/// integer such that `max|v| < 2^E`. All-zero input gives `bits - 1`.
pub fn choose_frac_bits<T: Real>(values: &[T], bits: u8) -> Result<i32> {
    check_bits(bits)?;
    if values.is_empty() {
        return Err(FgqError::EmptyInput("fixed-point exponent of no values"));
    }
    let mut max = 0f64;
    for v in values {
        let x = v.to_f64_lossless();
        if !x.is_finite() {
            return Err(FgqError::Data(format!("non-finite value {x}")));
        }
        max = max.max(x.abs());
    }
    let top = bits as i32 - 1;
    if max == 0.0 {
        return Ok(top);
    }
    let mut e = max.log2().floor() as i32 + 1;
    while max >= pow2(e) {
        e += 1;
    }
    while max < pow2(e - 1) {
        e -= 1;
    }
    Ok(top - e)
}

/// Quantizes with a given exponent: `clamp(round_half_even(v * 2^f))`.
pub fn dfp_quantize<T: Real>(values: &[T], bits: u8, frac_bits: i32) -> Result<DfpTensor> {
    check_bits(bits)?;
    let (lo, hi) = (mantissa_min(bits) as f64, mantissa_max(bits) as f64);
    let scale = pow2(frac_bits);
    let mantissas = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = v.to_f64_lossless();
            if x.is_nan() {
                return Err(FgqError::Data(format!("NaN at index {i}")));
            }
            Ok((x * scale).round_ties_even().clamp(lo, hi) as i8)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DfpTensor {
        bits,
        frac_bits,
        mantissas,
    })
}

/// Chooses the exponent from the data, then quantizes.
pub fn dfp_quantize_auto<T: Real>(values: &[T], bits: u8) -> Result<DfpTensor> {
    let f = choose_frac_bits(values, bits)?;
    dfp_quantize(values, bits, f)
}

/// Exact `mantissa * 2^-frac_bits` for every element.
pub fn dfp_dequantize<T: Real>(t: &DfpTensor) -> Vec<T> {
    let ulp = t.ulp();
    t.mantissas.iter().map(|&m| T::of(m as f64 * ulp)).collect()
}

//! Second ternary pass on the error left after scale quantization.

use super::{solve_symmetric_brute, TernarySolution};
use crate::error::Result;
use crate::fixedpoint::{dfp_dequantize, dfp_quantize_auto};
use crate::num::{sum_sq, Real};

/// Base solution with quantized scale(s) plus a ternary residual term.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualOutcome<T> {
    /// Input solution with its scale(s) quantized; `error` is recomputed.
    pub base: TernarySolution<T>,
    /// Ternarization of `W - base`, scale quantized; `error` is the final
    /// `||W - base - residual||^2`.
    pub residual: TernarySolution<T>,
}

impl<T: Real> ResidualOutcome<T> {
    pub fn final_error(&self) -> T {
        self.residual.error
    }

    pub fn error_reduction(&self) -> T {
        self.base.error - self.residual.error
    }

    /// `||residual.dequantize()||`, the largest possible error-norm reduction.
    pub fn residual_norm(&self) -> T {
        sum_sq(&self.residual.dequantize()).sqrt()
    }

    pub fn dequantize(&self) -> Vec<T> {
        self.base
            .dequantize()
            .into_iter()
            .zip(self.residual.dequantize())
            .map(|(a, b)| a + b)
            .collect()
    }
}

fn quantize_scales<T: Real>(sol: &mut TernarySolution<T>, bits: u8) -> Result<()> {
    let mut scales = vec![sol.alpha];
    scales.extend(sol.alpha_neg);
    let q: Vec<T> = dfp_dequantize(&dfp_quantize_auto(&scales, bits)?);
    sol.alpha = q[0];
    if sol.alpha_neg.is_some() {
        sol.alpha_neg = Some(q[1]);
    }
    Ok(())
}

/// Quantizes `base`'s scale to `scale_bits` fixed point, then ternarizes
/// the remaining error `W - alpha_hat * W_hat` with its own quantized scale.
pub fn solve_residual<T: Real>(
    w: &[T],
    base: &TernarySolution<T>,
    scale_bits: u8,
) -> Result<ResidualOutcome<T>> {
    if base.signs.len() != w.len() {
        return Err(crate::error::FgqError::shape(format!(
            "solution covers {} weights, input has {}",
            base.signs.len(),
            w.len()
        )));
    }
    let mut quant_base = base.clone();
    quantize_scales(&mut quant_base, scale_bits)?;
    quant_base.error = quant_base.residual_error(w);

    let target: Vec<T> = w
        .iter()
        .enumerate()
        .map(|(i, &x)| x - quant_base.dequant_at(i))
        .collect();
    let mut residual = solve_symmetric_brute(&target)?;
    quantize_scales(&mut residual, scale_bits)?;
    residual.error = residual.residual_error(&target);

    Ok(ResidualOutcome {
        base: quant_base,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_ternary_has_zero_residual() {
        let w = [0.5, 0.0, -0.5];
        let base = solve_symmetric_brute(&w).unwrap();
        let out = solve_residual(&w, &base, 8).unwrap();
        assert_eq!(out.residual.signs, vec![0, 0, 0]);
        assert_eq!(out.base.error, 0.0);
        assert_eq!(out.final_error(), 0.0);
    }

    #[test]
    fn recovers_pruned_structure() {
        let w = [0.1, 0.2, 0.9];
        let base = solve_symmetric_brute(&w).unwrap();
        let out = solve_residual(&w, &base, 8).unwrap();
        assert!(out.final_error() < 0.05);
        assert!(out.final_error() <= out.base.error);
        let recon = out.dequantize();
        let direct: f64 = w.iter().zip(&recon).map(|(&a, &b): (&f64, &f64)| (a - b) * (a - b)).sum();
        approx::assert_relative_eq!(direct, out.final_error(), max_relative = 1e-12);
    }
}

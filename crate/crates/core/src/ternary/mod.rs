//! Single-group ternarization: approximate `W` by `alpha * W_hat` with
//! `W_hat` in {-1, 0, +1}^n, minimizing `||W - alpha * W_hat||^2`.
//!
//! For a fixed support the optimal scale is the mean kept magnitude, which
//! leaves an error of `||W||^2 - (sum kept |W_i|)^2 / |kept|`. For a fixed
//! support size the largest magnitudes maximize that objective, so scanning
//! the `n` magnitude prefixes finds the exact optimum.

mod brute;
mod residual;
mod rms;

pub use brute::{solve_asymmetric_brute, solve_symmetric_brute, solve_two_alpha};
pub use residual::{solve_residual, ResidualOutcome};
pub use rms::{solve_rms_filter, solve_rms_hierarchical};

use serde::{Deserialize, Serialize};

use crate::error::{FgqError, Result};
use crate::num::{sign_of, Real};

/// Solved ternary sub-problem.
///
/// In two-scale mode `alpha` is the positive-side scale and `alpha_neg`
/// the negative-side one; otherwise `alpha_neg` is `None` and both signs
/// use `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TernarySolution<T> {
    pub signs: Vec<i8>,
    pub alpha: T,
    pub alpha_neg: Option<T>,
    pub delta_pos: T,
    pub delta_neg: T,
    pub error: T,
    pub kept_count: usize,
}

impl<T: Real> TernarySolution<T> {
    /// All-zero solution: nothing kept, error `||W||^2`.
    pub fn zero(w: &[T]) -> Self {
        Self {
            signs: vec![0; w.len()],
            alpha: T::zero(),
            alpha_neg: None,
            delta_pos: T::min_positive_value(),
            delta_neg: T::min_positive_value(),
            error: crate::num::sum_sq(w),
            kept_count: 0,
        }
    }

    #[inline]
    pub fn scale_for(&self, sign: i8) -> T {
        match (sign, self.alpha_neg) {
            (-1, Some(neg)) => neg,
            _ => self.alpha,
        }
    }

    #[inline]
    pub fn dequant_at(&self, i: usize) -> T {
        match self.signs[i] {
            0 => T::zero(),
            1 => self.alpha,
            _ => -self.scale_for(-1),
        }
    }

    pub fn dequantize(&self) -> Vec<T> {
        (0..self.signs.len()).map(|i| self.dequant_at(i)).collect()
    }

    /// `||W - dequantize()||^2` evaluated directly.
    pub fn residual_error(&self, w: &[T]) -> T {
        w.iter()
            .enumerate()
            .map(|(i, &x)| {
                let e = x - self.dequant_at(i);
                e * e
            })
            .sum()
    }
}

/// Objective `(sum kept |W_i|)^2 / |kept|` for the support `|W_i| > delta`,
/// zero when nothing is kept.
pub fn objective_at_threshold<T: Real>(w: &[T], delta: T) -> T {
    let (sum, count) = w
        .iter()
        .filter(|x| x.abs() > delta)
        .fold((T::zero(), 0usize), |(s, c), x| (s + x.abs(), c + 1));
    if count == 0 {
        T::zero()
    } else {
        sum * sum / T::of_usize(count)
    }
}

/// Keeps `|W_i| > delta` and sets `alpha` to the mean kept magnitude.
pub fn solve_with_threshold<T: Real>(w: &[T], delta: T) -> Result<TernarySolution<T>> {
    if delta.is_nan() || delta <= T::zero() || delta.is_infinite() {
        return Err(FgqError::Domain(format!("threshold must be positive, got {delta}")));
    }
    let signs: Vec<i8> = w
        .iter()
        .map(|&x| if x.abs() > delta { sign_of(x) } else { 0 })
        .collect();
    let kept_count = signs.iter().filter(|&&s| s != 0).count();
    let alpha = optimal_alpha_given_support(w, &signs)?;
    let mut sol = TernarySolution {
        signs,
        alpha,
        alpha_neg: None,
        delta_pos: delta,
        delta_neg: delta,
        error: T::zero(),
        kept_count,
    };
    sol.error = sol.residual_error(w);
    Ok(sol)
}

/// `<W, signs> / ||signs||^2`, or zero for an empty support.
pub fn optimal_alpha_given_support<T: Real>(w: &[T], signs: &[i8]) -> Result<T> {
    if w.len() != signs.len() {
        return Err(FgqError::shape(format!(
            "{} weights vs {} signs",
            w.len(),
            signs.len()
        )));
    }
    let mut projected = Vec::with_capacity(w.len());
    for (&x, &s) in w.iter().zip(signs) {
        match s {
            0 => {}
            1 => projected.push(x),
            -1 => projected.push(-x),
            other => {
                return Err(FgqError::Domain(format!("sign {other} is not ternary")));
            }
        }
    }
    Ok(exact_mean(projected))
}

/// Arithmetic mean, returning the common value exactly when all inputs are
/// equal; zero for no inputs.
pub(crate) fn exact_mean<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut it = values.into_iter();
    let Some(first) = it.next() else {
        return T::zero();
    };
    let (mut sum, mut count, mut uniform) = (first, 1usize, true);
    for v in it {
        sum = sum + v;
        count += 1;
        uniform &= v == first;
    }
    if uniform {
        first
    } else {
        sum / T::of_usize(count)
    }
}

/// Indices of nonzero entries sorted by descending magnitude, ties by index.
pub(crate) fn magnitude_order<T: Real>(w: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).filter(|&i| w[i] != T::zero()).collect();
    idx.sort_by(|&a, &b| {
        w[b].abs()
            .partial_cmp(&w[a].abs())
            .expect("finite weights")
            .then(a.cmp(&b))
    });
    idx
}

/// Canonical threshold separating the top `k` of `mags` (sorted descending).
pub(crate) fn prefix_threshold<T: Real>(mags: &[T], k: usize) -> T {
    let two = T::of(2.0);
    match (k, mags.len()) {
        (_, 0) => T::min_positive_value(),
        (0, _) => mags[0],
        (k, n) if k < n => (mags[k - 1] + mags[k]) / two,
        (k, _) => mags[k - 1] / two,
    }
}

//! Exact threshold solvers by prefix enumeration.

use super::{exact_mean, magnitude_order, prefix_threshold, TernarySolution};
use crate::error::{FgqError, Result};
use crate::num::{sign_of, Real};

/// Best prefix length of descending `mags` under `G(k) = S_k^2 / k`.
/// Ties keep the smaller `k`; an empty slice gives 0.
fn best_prefix<T: Real>(mags: &[T]) -> usize {
    let mut best_k = 0;
    let mut best_g = T::zero();
    let mut sum = T::zero();
    for (i, &m) in mags.iter().enumerate() {
        sum = sum + m;
        let k = i + 1;
        let g = sum * sum / T::of_usize(k);
        if g > best_g {
            best_g = g;
            best_k = k;
        }
    }
    best_k
}

/// Optimal single-scale, single-threshold ternarization.
///
/// Zero weights never enter the support. The reported threshold is the
/// midpoint between the last kept and first dropped magnitude, or half the
/// smallest kept magnitude when every nonzero weight is kept.
pub fn solve_symmetric_brute<T: Real>(w: &[T]) -> Result<TernarySolution<T>> {
    if w.is_empty() {
        return Err(FgqError::EmptyInput("ternarize an empty vector"));
    }
    let order = magnitude_order(w);
    let mags: Vec<T> = order.iter().map(|&i| w[i].abs()).collect();
    let k = best_prefix(&mags);
    if k == 0 {
        return Ok(TernarySolution::zero(w));
    }
    let mut signs = vec![0i8; w.len()];
    for &i in &order[..k] {
        signs[i] = sign_of(w[i]);
    }
    let delta = prefix_threshold(&mags, k);
    let mut sol = TernarySolution {
        signs,
        alpha: exact_mean(mags[..k].iter().copied()),
        alpha_neg: None,
        delta_pos: delta,
        delta_neg: delta,
        error: T::zero(),
        kept_count: k,
    };
    sol.error = sol.residual_error(w);
    Ok(sol)
}

fn side_order<T: Real>(w: &[T], positive: bool) -> Vec<usize> {
    magnitude_order(w)
        .into_iter()
        .filter(|&i| (w[i] > T::zero()) == positive)
        .collect()
}

/// Separate thresholds for positive and negative weights with one shared
/// scale. Enumerates every (positive prefix, negative prefix) pair, so the
/// cost is quadratic in the group size.
pub fn solve_asymmetric_brute<T: Real>(w: &[T]) -> Result<TernarySolution<T>> {
    if w.is_empty() {
        return Err(FgqError::EmptyInput("ternarize an empty vector"));
    }
    let pos = side_order(w, true);
    let neg = side_order(w, false);
    let pos_mags: Vec<T> = pos.iter().map(|&i| w[i].abs()).collect();
    let neg_mags: Vec<T> = neg.iter().map(|&i| w[i].abs()).collect();

    let prefix = |mags: &[T]| {
        let mut out = Vec::with_capacity(mags.len() + 1);
        out.push(T::zero());
        for &m in mags {
            out.push(*out.last().unwrap() + m);
        }
        out
    };
    let sp = prefix(&pos_mags);
    let sn = prefix(&neg_mags);

    let (mut best_p, mut best_q, mut best_g) = (0usize, 0usize, T::zero());
    for (p, &a) in sp.iter().enumerate() {
        for (q, &b) in sn.iter().enumerate() {
            let kept = p + q;
            if kept == 0 {
                continue;
            }
            let s = a + b;
            let g = s * s / T::of_usize(kept);
            if g > best_g || (g == best_g && kept < best_p + best_q) {
                best_g = g;
                best_p = p;
                best_q = q;
            }
        }
    }
    if best_p + best_q == 0 {
        return Ok(TernarySolution::zero(w));
    }

    let mut signs = vec![0i8; w.len()];
    for &i in pos[..best_p].iter().chain(&neg[..best_q]) {
        signs[i] = sign_of(w[i]);
    }
    let kept = best_p + best_q;
    let mut sol = TernarySolution {
        signs,
        alpha: exact_mean(pos_mags[..best_p].iter().chain(&neg_mags[..best_q]).copied()),
        alpha_neg: None,
        delta_pos: prefix_threshold(&pos_mags, best_p),
        delta_neg: prefix_threshold(&neg_mags, best_q),
        error: T::zero(),
        kept_count: kept,
    };
    sol.error = sol.residual_error(w);
    Ok(sol)
}

/// Independent scale and threshold per sign.
///
/// `W` splits into orthogonal positive and negative parts, each solved with
/// [`solve_symmetric_brute`]; the total error is the sum of both sides.
pub fn solve_two_alpha<T: Real>(w: &[T]) -> Result<TernarySolution<T>> {
    if w.is_empty() {
        return Err(FgqError::EmptyInput("ternarize an empty vector"));
    }
    let side = |positive: bool| {
        let part: Vec<T> = w
            .iter()
            .map(|&x| {
                if (x > T::zero() && positive) || (x < T::zero() && !positive) {
                    x
                } else {
                    T::zero()
                }
            })
            .collect();
        solve_symmetric_brute(&part)
    };
    let p = side(true)?;
    let n = side(false)?;
    let signs: Vec<i8> = p.signs.iter().zip(&n.signs).map(|(a, b)| a + b).collect();
    let mut sol = TernarySolution {
        signs,
        alpha: p.alpha,
        alpha_neg: Some(n.alpha),
        delta_pos: p.delta_pos,
        delta_neg: n.delta_neg,
        error: T::zero(),
        kept_count: p.kept_count + n.kept_count,
    };
    sol.error = sol.residual_error(w);
    Ok(sol)
}

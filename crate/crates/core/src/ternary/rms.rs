//! Hierarchical search with root-mean-square scales.
//!
//! Each candidate support is a magnitude prefix and its scale is the rms of
//! the kept weights rather than their mean. The rms is never smaller than
//! the mean, so this favours larger thresholds; it is never better than the
//! exact mean-scale optimum.

use super::{magnitude_order, prefix_threshold, TernarySolution};
use crate::error::{FgqError, Result};
use crate::num::{sign_of, sum_sq, Real};

/// Per-filter search over magnitude prefixes with rms scales.
pub fn solve_rms_filter<T: Real>(w: &[T]) -> Result<TernarySolution<T>> {
    if w.is_empty() {
        return Err(FgqError::EmptyInput("rms ternarization of an empty filter"));
    }
    let order = magnitude_order(w);
    let mags: Vec<T> = order.iter().map(|&i| w[i].abs()).collect();
    let total = sum_sq(w);

    let (mut best_k, mut best_err, mut best_alpha) = (0usize, total, T::zero());
    let (mut sum, mut sum_sq_kept) = (T::zero(), T::zero());
    for (i, &m) in mags.iter().enumerate() {
        let k = T::of_usize(i + 1);
        sum = sum + m;
        sum_sq_kept = sum_sq_kept + m * m;
        let alpha = (sum_sq_kept / k).sqrt();
        let two = T::of(2.0);
        let err = total - two * alpha * sum + alpha * alpha * k;
        if err < best_err {
            best_k = i + 1;
            best_err = err;
            best_alpha = alpha;
        }
    }
    if best_k == 0 {
        return Ok(TernarySolution::zero(w));
    }
    let mut signs = vec![0i8; w.len()];
    for &i in &order[..best_k] {
        signs[i] = sign_of(w[i]);
    }
    let delta = prefix_threshold(&mags, best_k);
    let mut sol = TernarySolution {
        signs,
        alpha: best_alpha,
        alpha_neg: None,
        delta_pos: delta,
        delta_neg: delta,
        error: T::zero(),
        kept_count: best_k,
    };
    sol.error = sol.residual_error(w);
    Ok(sol)
}

/// Group-level search: every filter's own best threshold is tried as the
/// shared threshold of the whole group, with the rms of all kept weights as
/// the shared scale; the candidate with the smallest summed error wins.
///
/// The returned solution covers the filters concatenated in order.
pub fn solve_rms_hierarchical<T: Real, F: AsRef<[T]>>(group: &[F]) -> Result<TernarySolution<T>> {
    if group.is_empty() {
        return Err(FgqError::EmptyInput("rms ternarization of an empty group"));
    }
    let per_filter = group
        .iter()
        .map(|f| solve_rms_filter(f.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<T> = group.iter().flat_map(|f| f.as_ref().iter().copied()).collect();

    let mut best: Option<TernarySolution<T>> = None;
    for cand in &per_filter {
        let delta = cand.delta_pos;
        let mut signs = vec![0i8; flat.len()];
        let (mut kept, mut ss) = (0usize, T::zero());
        for (i, &x) in flat.iter().enumerate() {
            if x.abs() > delta {
                signs[i] = sign_of(x);
                kept += 1;
                ss = ss + x * x;
            }
        }
        let alpha = if kept == 0 {
            T::zero()
        } else {
            (ss / T::of_usize(kept)).sqrt()
        };
        let mut sol = TernarySolution {
            signs,
            alpha,
            alpha_neg: None,
            delta_pos: delta,
            delta_neg: delta,
            error: T::zero(),
            kept_count: kept,
        };
        sol.error = sol.residual_error(&flat);
        if best.as_ref().is_none_or(|b| sol.error < b.error) {
            best = Some(sol);
        }
    }
    Ok(best.expect("group is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_filter_candidates() {
        // Candidate scales are rms of kept prefixes: 0.9, 0.6519, 0.5354.
        let w = [0.1, 0.2, 0.9];
        let cands: Vec<f64> = (1..=3)
            .map(|k| {
                let mut m = vec![0.9f64, 0.2, 0.1];
                m.truncate(k);
                (m.iter().map(|x| x * x).sum::<f64>() / k as f64).sqrt()
            })
            .collect();
        assert_relative_eq!(cands[1], 0.6519, epsilon = 1e-4);
        assert_relative_eq!(cands[2], 0.5354, epsilon = 1e-4);
        let errs: Vec<f64> = cands
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let signs = [(j >= 2) as i8, (j >= 1) as i8, 1];
                w.iter()
                    .zip(signs)
                    .map(|(x, s)| (x - a * s as f64).powi(2))
                    .sum()
            })
            .collect();
        let best = errs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();

        let s = solve_rms_hierarchical(&[w]).unwrap();
        assert_relative_eq!(s.alpha, cands[best.0]);
        assert_relative_eq!(s.error, *best.1, max_relative = 1e-12);
        assert_eq!(s.signs, vec![0, 0, 1]);
    }

    #[test]
    fn identical_filters_match_single() {
        let f = vec![0.3, -0.8, 0.05, 0.6];
        let one = solve_rms_hierarchical(std::slice::from_ref(&f)).unwrap();
        let three = solve_rms_hierarchical(&[f.clone(), f.clone(), f.clone()]).unwrap();
        assert_eq!(three.alpha, one.alpha);
        assert_eq!(&three.signs[..4], &one.signs[..]);
        assert_eq!(&three.signs[4..8], &one.signs[..]);
        assert_relative_eq!(three.error, 3.0 * one.error, max_relative = 1e-12);
    }

    #[test]
    fn never_beats_mean_optimum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.gen_range(1..32);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rms = solve_rms_hierarchical(std::slice::from_ref(&w)).unwrap();
            let exact = super::super::solve_symmetric_brute(&w).unwrap();
            assert!(rms.error >= exact.error - 1e-12);
        }
    }

    #[test]
    fn empty_inputs() {
        let none: [Vec<f64>; 0] = [];
        assert!(solve_rms_hierarchical(&none).is_err());
        assert!(solve_rms_hierarchical(&[Vec::<f64>::new()]).is_err());
    }
}

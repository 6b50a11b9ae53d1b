#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use fgq::WeightTensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Signed values drawn from a mix of shapes, including exact zeros and
/// repeated magnitudes.
pub fn mixed_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let exp = Exp::new(1.0).unwrap();
    let style = rng.gen_range(0..4);
    (0..n)
        .map(|_| match style {
            0 => normal.sample(rng),
            1 => exp.sample(rng) * if rng.gen() { 1.0 } else { -1.0 },
            2 => rng.gen_range(-1.0..1.0),
            _ => f64::from(rng.gen_range(-3i32..=3)) * 0.25,
        })
        .collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, max: (usize, usize, usize, usize)) -> WeightTensor<f64> {
    let dims = (
        rng.gen_range(1..=max.0),
        rng.gen_range(1..=max.1),
        rng.gen_range(1..=max.2),
        rng.gen_range(1..=max.3),
    );
    let n = dims.0 * dims.1 * dims.2 * dims.3;
    WeightTensor::new(dims, mixed_vector(rng, n)).unwrap()
}

/// Exhaustive search over all `3^n` sign patterns, each with its
/// least-squares scale clamped at zero. Returns the smallest
/// `||W - alpha * s||^2` evaluated directly for the winning pattern.
pub fn exhaustive_min_error(w: &[f64]) -> f64 {
    let n = w.len();
    let total: f64 = w.iter().map(|x| x * x).sum();
    let mut digits = vec![0u8; n];
    let mut best = (total, vec![0i8; n], 0.0);
    loop {
        let mut dot = 0.0;
        let mut k = 0usize;
        for (d, x) in digits.iter().zip(w) {
            match d {
                1 => {
                    dot += x;
                    k += 1;
                }
                2 => {
                    dot -= x;
                    k += 1;
                }
                _ => {}
            }
        }
        if k > 0 && dot > 0.0 {
            let err = total - dot * dot / k as f64;
            if err < best.0 {
                let signs = digits.iter().map(|&d| [0, 1, -1][d as usize]).collect();
                best = (err, signs, dot / k as f64);
            }
        }
        let mut i = 0;
        while i < n && digits[i] == 2 {
            digits[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        digits[i] += 1;
    }
    let (_, signs, alpha) = best;
    w.iter()
        .zip(&signs)
        .map(|(x, &s)| (x - alpha * f64::from(s)).powi(2))
        .sum()
}

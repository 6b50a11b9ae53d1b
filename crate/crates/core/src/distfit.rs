//! Distribution fits of weight magnitudes and the analytic thresholds they
//! imply.
//!
//! Both hypotheses are compared on `|W|`: a half-normal with scale
//! `rms(W)` and an exponential with mean `mean|W|`. The one with the
//! smaller Kolmogorov-Smirnov distance wins.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{FgqError, Result};
use crate::num::Real;

/// Samples above this size are stride-subsampled for the K-S statistic.
pub const KS_MAX_SAMPLES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Exponential,
    Uniform,
}

/// How the Gaussian-family threshold is derived from the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GaussianRule {
    /// `0.6 * sigma_hat`
    #[default]
    SigmaTimes06,
    /// `0.7 * mean|W|`
    MeanAbsTimes07,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    /// Fraction of smallest magnitudes dropped before an exponential fit.
    pub prune_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistFit<T> {
    pub family: Family,
    /// `sqrt(sum W_i^2 / n)`
    pub sigma_hat: T,
    /// `sum |W_i| / n`, the exponential mean (reciprocal rate).
    pub mean_abs: T,
    /// `max |W_i|`, the uniform half-range.
    pub a_hat: T,
    pub ks_stat: T,
    pub n: usize,
}

impl<T: Real> DistFit<T> {
    /// Scale parameter of the fitted family.
    pub fn scale(&self) -> T {
        match self.family {
            Family::Gaussian => self.sigma_hat,
            Family::Exponential => self.mean_abs,
            Family::Uniform => self.a_hat,
        }
    }
}

fn model_cdf(family: Family, scale: f64, x: f64) -> f64 {
    match family {
        Family::Gaussian => erf(x / (scale * std::f64::consts::SQRT_2)),
        Family::Exponential => -(-x / scale).exp_m1(),
        Family::Uniform => (x / scale).clamp(0.0, 1.0),
    }
}

fn magnitudes<T: Real>(sample: &[T]) -> Vec<f64> {
    let stride = sample.len().div_ceil(KS_MAX_SAMPLES).max(1);
    sample
        .iter()
        .step_by(stride)
        .map(|x| x.to_f64_lossless().abs())
        .collect()
}

/// Two-sided K-S distance between the empirical CDF of `|sample|` and the
/// family's magnitude CDF with the given scale, evaluated on both sides of
/// every step.
pub fn ks_statistic<T: Real>(sample: &[T], family: Family, scale: T) -> Result<T> {
    if sample.is_empty() {
        return Err(FgqError::EmptyInput("K-S statistic of an empty sample"));
    }
    let scale = scale.to_f64_lossless();
    if scale <= 0.0 || !scale.is_finite() {
        return Err(FgqError::DegenerateFit(format!(
            "{family:?} scale must be positive, got {scale}"
        )));
    }
    let mut xs = magnitudes(sample);
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0f64, |acc, (i, &x)| {
        let f = model_cdf(family, scale, x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        acc.max(above).max(below)
    });
    Ok(T::of(d.clamp(0.0, 1.0)))
}

/// Maximum-likelihood parameters for all families plus the K-S distance of
/// the requested one.
pub fn estimate<T: Real>(w: &[T], family: Family) -> Result<DistFit<T>> {
    estimate_with(w, family, &FitOptions::default())
}

pub fn estimate_with<T: Real>(w: &[T], family: Family, opts: &FitOptions) -> Result<DistFit<T>> {
    if w.is_empty() {
        return Err(FgqError::EmptyInput("fit of an empty sample"));
    }
    let p = opts.prune_fraction;
    if !(0.0..1.0).contains(&p) {
        return Err(FgqError::Domain(format!("prune fraction {p} not in [0, 1)")));
    }
    let pruned;
    let sample: &[T] = if family == Family::Exponential && p > 0.0 {
        let drop = (p * w.len() as f64).floor() as usize;
        let mut mags: Vec<T> = w.iter().map(|x| x.abs()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
        pruned = mags.split_off(drop.min(w.len() - 1));
        &pruned
    } else {
        w
    };

    let n = sample.len();
    let nf = T::of_usize(n);
    let sigma_hat = (crate::num::sum_sq(sample) / nf).sqrt();
    let mean_abs = sample.iter().map(|x| x.abs()).sum::<T>() / nf;
    let a_hat = sample.iter().fold(T::zero(), |m, x| m.max(x.abs()));

    let mut fit = DistFit {
        family,
        sigma_hat,
        mean_abs,
        a_hat,
        ks_stat: T::zero(),
        n,
    };
    if fit.scale() == T::zero() {
        return Err(FgqError::DegenerateFit(format!(
            "all-zero sample has no {family:?} scale"
        )));
    }
    fit.ks_stat = ks_statistic(sample, family, fit.scale())?;
    Ok(fit)
}

/// Gaussian and exponential fits of the same layer and the selected family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitComparison<T> {
    pub selected: Family,
    pub gaussian: DistFit<T>,
    pub exponential: DistFit<T>,
}

impl<T: Real> FitComparison<T> {
    pub fn selected_fit(&self) -> &DistFit<T> {
        match self.selected {
            Family::Exponential => &self.exponential,
            _ => &self.gaussian,
        }
    }
}

/// Fits both families and picks the strictly smaller K-S distance; ties
/// go to Gaussian. A sample whose magnitudes are all equal carries no shape
/// information and is treated as a tie.
pub fn compare_fits<T: Real>(w: &[T], opts: &FitOptions) -> Result<FitComparison<T>> {
    if w.len() < 2 {
        return Err(FgqError::EmptyInput("distribution selection needs at least 2 weights"));
    }
    let gaussian = estimate_with(w, Family::Gaussian, opts)?;
    let exponential = estimate_with(w, Family::Exponential, opts)?;
    let first = w[0].abs();
    let constant = w.iter().all(|x| x.abs() == first);
    let selected = if !constant && exponential.ks_stat < gaussian.ks_stat {
        Family::Exponential
    } else {
        Family::Gaussian
    };
    Ok(FitComparison {
        selected,
        gaussian,
        exponential,
    })
}

pub fn select_distribution<T: Real>(w: &[T]) -> Result<Family> {
    Ok(compare_fits(w, &FitOptions::default())?.selected)
}

/// Analytic threshold: `mean|W|` (exponential), `0.6 sigma` (Gaussian) or
/// `a / 3` (uniform).
pub fn analytic_delta<T: Real>(fit: &DistFit<T>) -> Result<T> {
    analytic_delta_with(fit, GaussianRule::default())
}

pub fn analytic_delta_with<T: Real>(fit: &DistFit<T>, rule: GaussianRule) -> Result<T> {
    let delta = match (fit.family, rule) {
        (Family::Exponential, _) => fit.mean_abs,
        (Family::Gaussian, GaussianRule::SigmaTimes06) => T::of(0.6) * fit.sigma_hat,
        (Family::Gaussian, GaussianRule::MeanAbsTimes07) => T::of(0.7) * fit.mean_abs,
        (Family::Uniform, _) => fit.a_hat / T::of(3.0),
    };
    if delta > T::zero() {
        Ok(delta)
    } else {
        Err(FgqError::DegenerateFit(format!(
            "{:?} fit has zero scale",
            fit.family
        )))
    }
}

/// Expected ternary objective `n m^2 (1 + delta/m)^2 e^(-delta/m)` for
/// exponential magnitudes with mean `m`; maximal at `delta = m`.
pub fn theoretical_g_exponential<T: Real>(delta: T, mean_abs: T, n: usize) -> T {
    let x = delta / mean_abs;
    let one = T::one();
    T::of_usize(n) * mean_abs * mean_abs * (one + x) * (one + x) * (-x).exp()
}

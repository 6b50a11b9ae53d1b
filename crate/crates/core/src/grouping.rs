//! Static grouping along input channels and the grouped ternary layer.
//!
//! A group is `N` consecutive input channels at one `(k, r, s)` position,
//! so every filter tap gets its own scale per channel run. Groups are
//! orthogonal, so the layer error is the sum of per-group errors and each
//! group is solved independently.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distfit::{self, Family, FitOptions, GaussianRule};
use crate::error::{FgqError, Result};
use crate::fixedpoint::{check_bits, dfp_dequantize, dfp_quantize, choose_frac_bits, DfpTensor};
use crate::io::packed::{pack_ternary, PackedTernary};
use crate::num::Real;
use crate::tensor::{Dims, WeightTensor};
use crate::ternary::{self, TernarySolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupPartition {
    dims: Dims,
    group_size: usize,
}

impl GroupPartition {
    pub fn new(dims: impl Into<Dims>, group_size: usize) -> Result<Self> {
        let dims = dims.into();
        if group_size < 1 {
            return Err(FgqError::Domain("group size must be at least 1".into()));
        }
        if dims.is_empty() {
            return Err(FgqError::shape(format!("empty weight dims {dims}")));
        }
        Ok(Self { dims, group_size })
    }

    /// One group per `(k, r, s)` spanning every input channel.
    pub fn whole_run(dims: impl Into<Dims>) -> Result<Self> {
        let dims = dims.into();
        Self::new(dims, dims.c.max(1))
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Channel runs per `(k, r, s)`: `ceil(C / N)`.
    pub fn runs(&self) -> usize {
        self.dims.c.div_ceil(self.group_size)
    }

    pub fn num_groups(&self) -> usize {
        self.dims.k * self.runs() * self.dims.r * self.dims.s
    }

    #[inline]
    pub fn group_of(&self, k: usize, c: usize, r: usize, s: usize) -> usize {
        ((k * self.runs() + c / self.group_size) * self.dims.r + r) * self.dims.s + s
    }

    /// `(k, run, r, s)` of a group index.
    #[inline]
    pub fn group_coords(&self, g: usize) -> (usize, usize, usize, usize) {
        let s = g % self.dims.s;
        let r = (g / self.dims.s) % self.dims.r;
        let rest = g / (self.dims.s * self.dims.r);
        (rest / self.runs(), rest % self.runs(), r, s)
    }

    /// Input channels covered by a channel run; the last one may be short.
    pub fn channels(&self, run: usize) -> std::ops::Range<usize> {
        let start = run * self.group_size;
        start..(start + self.group_size).min(self.dims.c)
    }

    /// Row-major `(k, c, r, s)` offsets of a group's elements, in channel order.
    pub fn group_offsets(&self, g: usize) -> impl Iterator<Item = usize> + '_ {
        let (k, run, r, s) = self.group_coords(g);
        self.channels(run).map(move |c| self.dims.offset(k, c, r, s))
    }

    /// Canonical offset of every element in `[K][C/N][R*S][N]` stream order.
    pub fn layout_order(&self) -> Vec<usize> {
        (0..self.num_groups())
            .flat_map(|g| self.group_offsets(g))
            .collect()
    }

    pub fn gather<T: Copy>(&self, data: &[T], g: usize) -> Vec<T> {
        self.group_offsets(g).map(|o| data[o]).collect()
    }
}

/// Bit widths of a layer: weights (2 = grouped ternary, 8 = fixed point),
/// scaling factors and input activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precision {
    pub weight_bits: u8,
    pub scale_bits: u8,
    pub act_bits: u8,
}

impl Default for Precision {
    fn default() -> Self {
        Self {
            weight_bits: 2,
            scale_bits: 8,
            act_bits: 8,
        }
    }
}

/// Per-group scales, either fixed point or still at full precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Scales<T> {
    Quantized(DfpTensor),
    Exact(Vec<T>),
}

impl<T: Real> Scales<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Scales::Quantized(t) => dfp_dequantize(t),
            Scales::Exact(v) => v.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Scales::Quantized(t) => t.len(),
            Scales::Exact(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights<T> {
    /// Signs in `[K][C/N][R*S][N]` order with one scale per group.
    /// `scales_neg` is only set by the two-scale diagnostic solver.
    Ternary {
        signs: PackedTernary,
        scales: Scales<T>,
        scales_neg: Option<Scales<T>>,
    },
    /// Fixed-point weights in row-major `(k, c, r, s)` order (first-layer path).
    Fixed(DfpTensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgqLayer<T> {
    pub partition: GroupPartition,
    pub precision: Precision,
    pub weights: LayerWeights<T>,
}

impl<T: Real> FgqLayer<T> {
    pub fn dims(&self) -> Dims {
        self.partition.dims()
    }

    pub fn is_full_precision(&self) -> bool {
        matches!(self.weights, LayerWeights::Fixed(_))
    }

    /// Checks sizes of the sign stream and scale tensors against the partition.
    pub fn validate(&self) -> Result<()> {
        let n = self.dims().len();
        match &self.weights {
            LayerWeights::Ternary {
                signs,
                scales,
                scales_neg,
            } => {
                if signs.len() != n {
                    return Err(FgqError::shape(format!(
                        "{} signs for {n} weights",
                        signs.len()
                    )));
                }
                let g = self.partition.num_groups();
                for s in std::iter::once(scales).chain(scales_neg.as_ref()) {
                    if s.len() != g {
                        return Err(FgqError::shape(format!("{} scales for {g} groups", s.len())));
                    }
                }
                if self.precision.weight_bits != 2 {
                    return Err(FgqError::Precision("ternary layer must be tagged 2-bit".into()));
                }
            }
            LayerWeights::Fixed(t) => {
                if t.len() != n {
                    return Err(FgqError::shape(format!("{} weights for {n}", t.len())));
                }
                if self.precision.weight_bits != t.bits() {
                    return Err(FgqError::Precision("weight tag does not match mantissa width".into()));
                }
            }
        }
        Ok(())
    }

    /// Signs in row-major `(k, c, r, s)` order; `None` for fixed-point layers.
    pub fn signs_canonical(&self) -> Option<Vec<i8>> {
        let LayerWeights::Ternary { signs, .. } = &self.weights else {
            return None;
        };
        let mut out = vec![0i8; self.dims().len()];
        for (pos, off) in self.partition.layout_order().into_iter().enumerate() {
            out[off] = signs.get(pos);
        }
        Some(out)
    }
}

/// Reconstructs `sum_g alpha_g * W_hat_g` (or the fixed-point weights).
pub fn dequantize<T: Real>(layer: &FgqLayer<T>) -> WeightTensor<T> {
    let dims = layer.dims();
    let data = match &layer.weights {
        LayerWeights::Fixed(t) => dfp_dequantize(t),
        LayerWeights::Ternary {
            signs,
            scales,
            scales_neg,
        } => {
            let pos = scales.values();
            let neg = scales_neg.as_ref().map(Scales::values);
            let p = &layer.partition;
            let mut out = vec![T::zero(); dims.len()];
            let mut pos_idx = 0;
            for g in 0..p.num_groups() {
                for off in p.group_offsets(g) {
                    out[off] = match signs.get(pos_idx) {
                        1 => pos[g],
                        -1 => -neg.as_ref().map_or(pos[g], |n| n[g]),
                        _ => T::zero(),
                    };
                    pos_idx += 1;
                }
            }
            out
        }
    };
    WeightTensor::new(dims, data).expect("dequantized values are finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Brute,
    TwoAlpha,
    AnalyticAuto,
    AnalyticGaussian,
    AnalyticExponential,
    Rms,
}

impl Solver {
    pub const ALL: [Solver; 6] = [
        Solver::Brute,
        Solver::TwoAlpha,
        Solver::AnalyticAuto,
        Solver::AnalyticGaussian,
        Solver::AnalyticExponential,
        Solver::Rms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Brute => "brute",
            Solver::TwoAlpha => "two_alpha",
            Solver::AnalyticAuto => "analytic_auto",
            Solver::AnalyticGaussian => "analytic_gaussian",
            Solver::AnalyticExponential => "analytic_exponential",
            Solver::Rms => "rms",
        }
    }
}

impl FromStr for Solver {
    type Err = FgqError;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| FgqError::Domain(format!("unknown solver '{s}'")))
    }
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TernarizeOptions {
    /// Fixed-point width of the scales; `None` keeps them at full precision.
    pub scale_bits: Option<u8>,
    pub act_bits: u8,
    pub fit: FitOptions,
    pub gaussian_rule: GaussianRule,
}

impl Default for TernarizeOptions {
    fn default() -> Self {
        Self {
            scale_bits: Some(8),
            act_bits: 8,
            fit: FitOptions::default(),
            gaussian_rule: GaussianRule::default(),
        }
    }
}

/// Result of ternarizing one layer.
#[derive(Debug, Clone)]
pub struct Ternarized<T> {
    pub layer: FgqLayer<T>,
    /// Per-group solver output before scale quantization; each solution's
    /// signs follow the group's channel order.
    pub solutions: Vec<TernarySolution<T>>,
    /// `sum_g solutions[g].error`
    pub exact_error: T,
    /// Per-group error with the scales stored in the layer.
    pub group_errors: Vec<T>,
    pub total_error: T,
    /// Family chosen by K-S for `analytic_auto`.
    pub selected_family: Option<Family>,
}

fn solve_group<T: Real>(
    w: &[T],
    solver: Solver,
    family: Option<Family>,
    opts: &TernarizeOptions,
) -> Result<TernarySolution<T>> {
    match solver {
        Solver::Brute => ternary::solve_symmetric_brute(w),
        Solver::TwoAlpha => ternary::solve_two_alpha(w),
        Solver::Rms => ternary::solve_rms_hierarchical(&[w]),
        Solver::AnalyticAuto | Solver::AnalyticGaussian | Solver::AnalyticExponential => {
            if w.iter().all(|x| *x == T::zero()) {
                return Ok(TernarySolution::zero(w));
            }
            let family = family.expect("analytic solvers carry a family");
            let fit = distfit::estimate_with(w, family, &opts.fit)?;
            let delta = distfit::analytic_delta_with(&fit, opts.gaussian_rule)?;
            ternary::solve_with_threshold(w, delta)
        }
    }
}

/// Solves every group independently and assembles the layer.
///
/// With `scale_bits` set, all scales of the layer share one fixed-point
/// exponent and `group_errors`/`total_error` are recomputed with the
/// quantized scales.
pub fn fgq_ternarize<T: Real>(
    w: &WeightTensor<T>,
    partition: &GroupPartition,
    solver: Solver,
    opts: &TernarizeOptions,
) -> Result<Ternarized<T>> {
    if w.dims() != partition.dims() {
        return Err(FgqError::shape(format!(
            "tensor dims {} vs partition dims {}",
            w.dims(),
            partition.dims()
        )));
    }
    check_bits(opts.act_bits)?;
    let family = match solver {
        Solver::AnalyticAuto => Some(distfit::compare_fits(w.data(), &opts.fit)?.selected),
        Solver::AnalyticGaussian => Some(Family::Gaussian),
        Solver::AnalyticExponential => Some(Family::Exponential),
        _ => None,
    };

    let data = w.data();
    let solutions = (0..partition.num_groups())
        .into_par_iter()
        .map(|g| solve_group(&partition.gather(data, g), solver, family, opts))
        .collect::<Result<Vec<_>>>()?;

    let exact_error = solutions.iter().map(|s| s.error).sum();
    let signs: Vec<i8> = solutions.iter().flat_map(|s| s.signs.iter().copied()).collect();
    let alphas: Vec<T> = solutions.iter().map(|s| s.alpha).collect();
    let alphas_neg: Option<Vec<T>> = (solver == Solver::TwoAlpha)
        .then(|| solutions.iter().map(|s| s.alpha_neg.unwrap_or(T::zero())).collect());

    let (scales, scales_neg, scale_bits) = match opts.scale_bits {
        None => (Scales::Exact(alphas), alphas_neg.map(Scales::Exact), 8),
        Some(bits) => {
            let mut all = alphas.clone();
            all.extend(alphas_neg.iter().flatten().copied());
            let f = choose_frac_bits(&all, bits)?;
            (
                Scales::Quantized(dfp_quantize(&alphas, bits, f)?),
                alphas_neg
                    .map(|v| dfp_quantize(&v, bits, f).map(Scales::Quantized))
                    .transpose()?,
                bits,
            )
        }
    };

    let pos = scales.values();
    let neg = scales_neg.as_ref().map(Scales::values);
    let group_errors: Vec<T> = solutions
        .iter()
        .enumerate()
        .map(|(g, sol)| {
            let mut q = sol.clone();
            q.alpha = pos[g];
            q.alpha_neg = neg.as_ref().map(|n| n[g]);
            q.residual_error(&partition.gather(data, g))
        })
        .collect();
    let total_error = group_errors.iter().copied().sum();

    let layer = FgqLayer {
        partition: *partition,
        precision: Precision {
            weight_bits: 2,
            scale_bits,
            act_bits: opts.act_bits,
        },
        weights: LayerWeights::Ternary {
            signs: pack_ternary(&signs)?,
            scales,
            scales_neg,
        },
    };
    Ok(Ternarized {
        layer,
        solutions,
        exact_error,
        group_errors,
        total_error,
        selected_family: family.filter(|_| solver == Solver::AnalyticAuto),
    })
}

/// First-layer path: no ternarization, weights quantized to `bits` fixed
/// point with one exponent for the whole layer.
pub fn quantize_fixed_layer<T: Real>(
    w: &WeightTensor<T>,
    partition: &GroupPartition,
    bits: u8,
    act_bits: u8,
) -> Result<FgqLayer<T>> {
    if w.dims() != partition.dims() {
        return Err(FgqError::shape("tensor and partition dims differ"));
    }
    check_bits(act_bits)?;
    let f = choose_frac_bits(w.data(), bits)?;
    Ok(FgqLayer {
        partition: *partition,
        precision: Precision {
            weight_bits: bits,
            scale_bits: bits,
            act_bits,
        },
        weights: LayerWeights::Fixed(dfp_quantize(w.data(), bits, f)?),
    })
}

/// Terms of `||W - D_hat W_hat|| <= ternarization + clustering + low precision`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringBound<T> {
    /// `||W - D* W_hat||`
    pub ternarization: T,
    /// `||D* - D~|| * ||W_hat||`
    pub clustering: T,
    /// `||D~ - D_hat|| * ||W_hat||`
    pub low_precision: T,
    /// `||W - D_hat W_hat||`
    pub total: T,
}

impl<T: Real> ClusteringBound<T> {
    pub fn slack(&self) -> T {
        self.ternarization + self.clustering + self.low_precision - self.total
    }

    pub fn holds(&self) -> bool {
        let bound = self.ternarization + self.clustering + self.low_precision;
        self.total <= bound + T::of(1e-12) * bound.max(T::one())
    }
}

/// Evaluates the three error terms for per-group scale vectors: exact
/// (`d_star`), clustered (`d_tilde`) and low precision (`d_hat`). `signs`
/// are in row-major `(k, c, r, s)` order.
pub fn clustering_bound_report<T: Real>(
    w: &WeightTensor<T>,
    partition: &GroupPartition,
    signs: &[i8],
    d_star: &[T],
    d_tilde: &[T],
    d_hat: &[T],
) -> Result<ClusteringBound<T>> {
    let g = partition.num_groups();
    if w.dims() != partition.dims() || signs.len() != w.data().len() {
        return Err(FgqError::shape("weights, partition and signs disagree"));
    }
    for (name, v) in [("D*", d_star), ("D~", d_tilde), ("D^", d_hat)] {
        if v.len() != g {
            return Err(FgqError::shape(format!("{name} has {} entries for {g} groups", v.len())));
        }
    }
    let dims = w.dims();
    let mut group_of = vec![0usize; dims.len()];
    for gi in 0..g {
        for off in partition.group_offsets(gi) {
            group_of[off] = gi;
        }
    }
    let resid = |d: &[T]| -> T {
        w.data()
            .iter()
            .zip(signs)
            .zip(&group_of)
            .map(|((&x, &s), &gi)| {
                let e = x - d[gi] * T::of(s as f64);
                e * e
            })
            .sum::<T>()
            .sqrt()
    };
    let sign_norm = T::of_usize(signs.iter().filter(|&&s| s != 0).count()).sqrt();
    let diff_norm = |a: &[T], b: &[T]| crate::num::dist_sq(a, b).sqrt();
    Ok(ClusteringBound {
        ternarization: resid(d_star),
        clustering: diff_norm(d_star, d_tilde) * sign_norm,
        low_precision: diff_norm(d_tilde, d_hat) * sign_norm,
        total: resid(d_hat),
    })
}

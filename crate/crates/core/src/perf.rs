//! Operation counts and a parameterized speedup projection.
//!
//! With groups of `N` channels, every group needs one scale multiply per
//! output position; the remaining `N - 1` accumulations per group are
//! ternary add/subtract operations. Layers flagged `exempt` run at full
//! precision and keep all of their multiply-accumulates.

use serde::{Deserialize, Serialize};

use crate::error::{FgqError, Result};
use crate::tensor::Dims;

/// Group sizes covered by [`sweep_group_sizes`].
pub const SWEEP_GROUP_SIZES: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub dims: Dims,
    pub out_h: usize,
    pub out_w: usize,
    pub group_size: usize,
    #[serde(default)]
    pub exempt: bool,
}

impl LayerShape {
    pub fn new(dims: impl Into<Dims>, out_hw: (usize, usize), group_size: usize) -> Self {
        Self {
            dims: dims.into(),
            out_h: out_hw.0,
            out_w: out_hw.1,
            group_size,
            exempt: false,
        }
    }

    pub fn exempt(mut self, exempt: bool) -> Self {
        self.exempt = exempt;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.out_h == 0 || self.out_w == 0 {
            return Err(FgqError::shape(format!(
                "layer {} with output {}x{} is empty",
                self.dims, self.out_h, self.out_w
            )));
        }
        if self.group_size == 0 {
            return Err(FgqError::Domain("group size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Relative cost of one operation of each kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Full-precision multiply-accumulate in the baseline.
    pub fma_cost: f64,
    /// Low-precision ternary accumulate.
    pub ternary_cost: f64,
    /// Multiply-accumulate in an exempt layer.
    pub exempt_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            fma_cost: 1.0,
            ternary_cost: 1.0 / 16.0,
            exempt_cost: 1.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fma_cost", self.fma_cost),
            ("ternary_cost", self.ternary_cost),
            ("exempt_cost", self.exempt_cost),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FgqError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerOps {
    pub fma_baseline: u64,
    /// Scale multiplies in grouped layers, or all FMAs in an exempt layer.
    pub mult_count: u64,
    pub ternary_acc_count: u64,
    pub exempt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsReport {
    pub layers: Vec<LayerOps>,
    pub fma_baseline: u64,
    pub mult_count: u64,
    pub ternary_acc_count: u64,
    /// FMAs belonging to exempt layers; included in `mult_count`.
    pub exempt_fma: u64,
    pub fraction_eliminated: f64,
    pub projected_speedup: f64,
}

pub fn layer_ops(shape: &LayerShape) -> Result<LayerOps> {
    shape.validate()?;
    let d = shape.dims;
    let positions = (shape.out_h * shape.out_w) as u64;
    let taps = (d.r * d.s) as u64;
    let fma = d.k as u64 * d.c as u64 * taps * positions;
    if shape.exempt {
        return Ok(LayerOps {
            fma_baseline: fma,
            mult_count: fma,
            ternary_acc_count: 0,
            exempt: true,
        });
    }
    let mults = d.k as u64 * d.c.div_ceil(shape.group_size) as u64 * taps * positions;
    Ok(LayerOps {
        fma_baseline: fma,
        mult_count: mults,
        ternary_acc_count: fma - mults,
        exempt: false,
    })
}

pub fn count_ops(layers: &[LayerShape], cost: &CostModel) -> Result<OpsReport> {
    if layers.is_empty() {
        return Err(FgqError::EmptyInput("layer list"));
    }
    cost.validate()?;
    let per: Vec<LayerOps> = layers.iter().map(layer_ops).collect::<Result<_>>()?;
    let fma_baseline = per.iter().map(|l| l.fma_baseline).sum::<u64>();
    let mult_count = per.iter().map(|l| l.mult_count).sum::<u64>();
    let ternary_acc_count = per.iter().map(|l| l.ternary_acc_count).sum::<u64>();
    let exempt_fma = per.iter().filter(|l| l.exempt).map(|l| l.fma_baseline).sum::<u64>();
    Ok(OpsReport {
        fraction_eliminated: 1.0 - mult_count as f64 / fma_baseline as f64,
        projected_speedup: project_speedup(&per, cost),
        layers: per,
        fma_baseline,
        mult_count,
        ternary_acc_count,
        exempt_fma,
    })
}

/// Baseline cost over low-precision cost for already counted layers.
pub fn project_speedup(layers: &[LayerOps], cost: &CostModel) -> f64 {
    let (mut base, mut low) = (0.0, 0.0);
    for l in layers {
        base += l.fma_baseline as f64 * cost.fma_cost;
        low += if l.exempt {
            l.mult_count as f64 * cost.exempt_cost
        } else {
            l.mult_count as f64 * cost.fma_cost + l.ternary_acc_count as f64 * cost.ternary_cost
        };
    }
    base / low
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub group_size: usize,
    pub fma_baseline: u64,
    pub mult_count: u64,
    pub ternary_acc_count: u64,
    pub fraction_eliminated: f64,
    pub projected_speedup: f64,
}

/// Recounts `layers` with every non-exempt group size replaced by each `N`.
pub fn sweep_group_sizes(
    layers: &[LayerShape],
    sizes: &[usize],
    cost: &CostModel,
) -> Result<Vec<SweepRow>> {
    sizes
        .iter()
        .map(|&n| {
            let resized: Vec<LayerShape> = layers
                .iter()
                .map(|l| LayerShape { group_size: n, ..*l })
                .collect();
            let r = count_ops(&resized, cost)?;
            Ok(SweepRow {
                group_size: n,
                fma_baseline: r.fma_baseline,
                mult_count: r.mult_count,
                ternary_acc_count: r.ternary_acc_count,
                fraction_eliminated: r.fraction_eliminated,
                projected_speedup: r.projected_speedup,
            })
        })
        .collect()
}

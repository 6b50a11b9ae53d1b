use anyhow::{Context, Result};
use serde::Serialize;

use fgq::perf::{count_ops, layer_ops, project_speedup, sweep_group_sizes, SweepRow, SWEEP_GROUP_SIZES};
use fgq::{ConvSpec, CostModel, LayerShape, OpsReport};

use crate::config::RunConfig;
use crate::{csv_line, load_weights};

#[derive(Debug, Clone, Serialize)]
pub struct PerfReport {
    pub command: &'static str,
    pub seed: u64,
    pub input_hw: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub group_size: usize,
    pub exempt_first: bool,
    pub cost: CostModel,
    pub names: Vec<String>,
    pub shapes: Vec<LayerShape>,
    pub ops: OpsReport,
    pub sweep: Vec<SweepRow>,
}

/// Chains spatial sizes through the layers with one stride/padding setting.
pub fn layer_shapes(
    dims: &[fgq::Dims],
    cfg: &RunConfig,
) -> Result<Vec<LayerShape>> {
    let spec = ConvSpec {
        stride: cfg.stride,
        padding: cfg.padding,
        act_bits: 8,
    };
    let mut hw = cfg.input_hw;
    dims.iter()
        .enumerate()
        .map(|(i, d)| {
            let out = spec
                .output_hw(hw, (d.r, d.s))
                .with_context(|| format!("layer {i}: input {}x{}", hw.0, hw.1))?;
            hw = out;
            Ok(LayerShape::new(*d, out, cfg.group_size).exempt(i == 0 && cfg.exempt_first))
        })
        .collect()
}

pub fn perf_for_shapes(names: Vec<String>, shapes: Vec<LayerShape>, cfg: &RunConfig) -> Result<PerfReport> {
    let ops = count_ops(&shapes, &cfg.cost)?;
    let sweep = sweep_group_sizes(&shapes, &SWEEP_GROUP_SIZES, &cfg.cost)?;
    Ok(PerfReport {
        command: "perf",
        seed: cfg.seed,
        input_hw: cfg.input_hw,
        stride: cfg.stride,
        padding: cfg.padding,
        group_size: cfg.group_size,
        exempt_first: cfg.exempt_first,
        cost: cfg.cost,
        names,
        shapes,
        ops,
        sweep,
    })
}

pub fn cmd_perf(cfg: &RunConfig) -> Result<PerfReport> {
    let layers = load_weights(&cfg.weights)?;
    let dims: Vec<fgq::Dims> = layers.iter().map(|(_, w)| w.dims()).collect();
    let shapes = layer_shapes(&dims, cfg)?;
    perf_for_shapes(layers.into_iter().map(|(n, _)| n).collect(), shapes, cfg)
}

impl PerfReport {
    /// Sweep over group sizes with one row per layer and a `total` row per size.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "group_size,layer,exempt,fma_baseline,mult_count,ternary_acc_count,fraction_eliminated,projected_speedup\n",
        );
        for &n in &SWEEP_GROUP_SIZES {
            for (i, shape) in self.shapes.iter().enumerate() {
                let ops = layer_ops(&LayerShape { group_size: n, ..*shape }).expect("validated shapes");
                out += &csv_line(&[
                    n.to_string(),
                    self.names[i].clone(),
                    ops.exempt.to_string(),
                    ops.fma_baseline.to_string(),
                    ops.mult_count.to_string(),
                    ops.ternary_acc_count.to_string(),
                    (1.0 - ops.mult_count as f64 / ops.fma_baseline as f64).to_string(),
                    project_speedup(&[ops], &self.cost).to_string(),
                ]);
            }
            let row = self.sweep.iter().find(|r| r.group_size == n).expect("swept size");
            out += &csv_line(&[
                n.to_string(),
                "total".into(),
                String::new(),
                row.fma_baseline.to_string(),
                row.mult_count.to_string(),
                row.ternary_acc_count.to_string(),
                row.fraction_eliminated.to_string(),
                row.projected_speedup.to_string(),
            ]);
        }
        out
    }
}

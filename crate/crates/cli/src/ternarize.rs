use anyhow::{Context, Result};
use serde::Serialize;

use fgq::grouping::{dequantize, fgq_ternarize, quantize_fixed_layer};
use fgq::io::write_fgq;
use fgq::{Family, FgqLayer, FitOptions, GroupPartition, Solver, TernarizeOptions, WeightTensor};

use crate::config::RunConfig;
use crate::{csv_line, load_weights};

#[derive(Debug, Clone, Serialize)]
pub struct LayerSummary {
    pub index: usize,
    pub name: String,
    pub dims: [usize; 4],
    /// `ternary` or `fixed`.
    pub kind: &'static str,
    pub group_size: usize,
    pub num_groups: usize,
    pub selected_family: Option<Family>,
    /// Sum of per-group errors before the scales are quantized.
    pub exact_error: f64,
    /// Sum of per-group errors with the stored scales.
    pub group_error_sum: f64,
    /// `||W - dequantize(layer)||^2`.
    pub total_error: f64,
    pub weight_norm_sq: f64,
    pub relative_error: f64,
    pub weight_bits: u8,
    pub scale_bits: u8,
    pub act_bits: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct TernarizeReport {
    pub command: &'static str,
    pub seed: u64,
    pub solver: Solver,
    pub group_size: usize,
    pub scale_bits: u8,
    pub act_bits: u8,
    pub output: Option<String>,
    pub total_error: f64,
    pub layers: Vec<LayerSummary>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Quantizes every layer; with `first_layer_fixed` layer 0 becomes 8-bit
/// fixed point instead of ternary.
pub fn ternarize_layers(
    layers: &[(String, WeightTensor<f64>)],
    cfg: &RunConfig,
) -> Result<(Vec<FgqLayer<f64>>, TernarizeReport)> {
    let act_bits = cfg.act_bits_or_default();
    let opts = TernarizeOptions {
        scale_bits: Some(cfg.scale_bits),
        act_bits,
        fit: FitOptions {
            prune_fraction: cfg.prune_fraction,
        },
        gaussian_rule: cfg.gaussian_rule.into(),
    };
    let mut model = Vec::with_capacity(layers.len());
    let mut summaries = Vec::with_capacity(layers.len());
    for (i, (name, w)) in layers.iter().enumerate() {
        let ctx = || format!("layer {i} ({name})");
        let partition = GroupPartition::new(w.dims(), cfg.group_size).with_context(ctx)?;
        let norm: f64 = w.data().iter().map(|x| x * x).sum();
        let (layer, kind, exact, group_sum, family) = if i == 0 && cfg.first_layer_fixed {
            let layer = quantize_fixed_layer(w, &partition, 8, act_bits).with_context(ctx)?;
            let err = sq_dist(w.data(), dequantize(&layer).data());
            (layer, "fixed", err, err, None)
        } else {
            let t = fgq_ternarize(w, &partition, cfg.solver, &opts).with_context(ctx)?;
            (t.layer, "ternary", t.exact_error, t.total_error, t.selected_family)
        };
        let total = sq_dist(w.data(), dequantize(&layer).data());
        summaries.push(LayerSummary {
            index: i,
            name: name.clone(),
            dims: w.dims().as_array(),
            kind,
            group_size: partition.group_size(),
            num_groups: if kind == "fixed" { 0 } else { partition.num_groups() },
            selected_family: family,
            exact_error: exact,
            group_error_sum: group_sum,
            total_error: total,
            weight_norm_sq: norm,
            relative_error: if norm > 0.0 { total / norm } else { 0.0 },
            weight_bits: layer.precision.weight_bits,
            scale_bits: layer.precision.scale_bits,
            act_bits,
        });
        model.push(layer);
    }
    let report = TernarizeReport {
        command: "ternarize",
        seed: cfg.seed,
        solver: cfg.solver,
        group_size: cfg.group_size,
        scale_bits: cfg.scale_bits,
        act_bits,
        output: cfg.out.as_ref().map(|p| p.display().to_string()),
        total_error: summaries.iter().map(|s| s.total_error).sum(),
        layers: summaries,
    };
    Ok((model, report))
}

pub fn cmd_ternarize(cfg: &RunConfig) -> Result<TernarizeReport> {
    let layers = load_weights(&cfg.weights)?;
    let (model, report) = ternarize_layers(&layers, cfg)?;
    if let Some(out) = &cfg.out {
        write_fgq(&model, out).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(report)
}

impl TernarizeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,name,kind,group_size,num_groups,exact_error,total_error,weight_norm_sq,relative_error\n",
        );
        for l in &self.layers {
            out += &csv_line(&[
                l.index.to_string(),
                l.name.clone(),
                l.kind.to_string(),
                l.group_size.to_string(),
                l.num_groups.to_string(),
                l.exact_error.to_string(),
                l.total_error.to_string(),
                l.weight_norm_sq.to_string(),
                l.relative_error.to_string(),
            ]);
        }
        out
    }
}

//! Runs a stored model through the low-precision emulator layer by layer
//! and compares against a full-precision chain.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use fgq::grouping::dequantize;
use fgq::io::{read_fgq, read_npy, write_npy};
use fgq::sim::{conv_fgq, conv_reference, error_metrics, quantize_activations};
use fgq::{ActivationTensor, ConvSpec, ErrorMetrics, FgqLayer, NpyDtype, WeightTensor};

use crate::config::RunConfig;
use crate::{csv_line, load_weights};

#[derive(Debug, Clone, Serialize)]
pub struct LayerSim {
    pub index: usize,
    pub dims: [usize; 4],
    pub act_bits: u8,
    pub input_frac_bits: i32,
    pub output_dims: [usize; 3],
    /// Emulated output equals the reference convolution of the dequantized
    /// operands exactly.
    pub bit_exact: bool,
    /// Emulated chain against the full-precision chain after this layer.
    pub metrics: ErrorMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    pub seed: u64,
    /// `weights` when float weights were supplied, else `dequantized`.
    pub reference: &'static str,
    pub stride: usize,
    pub padding: usize,
    pub layers: Vec<LayerSim>,
}

/// Loads `(C, H, W)` or `(1, C, H, W)` activations.
pub fn load_activations(path: &Path) -> Result<ActivationTensor<f64>> {
    let arr = read_npy(path).with_context(|| format!("reading {}", path.display()))?;
    let dims = match arr.shape[..] {
        [c, h, w] | [1, c, h, w] => (c, h, w),
        _ => bail!("activations must be (C, H, W), got shape {:?}", arr.shape),
    };
    Ok(ActivationTensor::new(dims, arr.data)?)
}

pub fn simulate_model(
    model: &[FgqLayer<f64>],
    reference_weights: Option<&[WeightTensor<f64>]>,
    input: &ActivationTensor<f64>,
    cfg: &RunConfig,
) -> Result<(SimulateReport, ActivationTensor<f64>)> {
    if let Some(refs) = reference_weights {
        if refs.len() != model.len() {
            bail!("{} reference weight tensors for {} model layers", refs.len(), model.len());
        }
    }
    let mut emulated = input.clone();
    let mut reference = input.clone();
    let mut layers = Vec::with_capacity(model.len());
    for (i, layer) in model.iter().enumerate() {
        let ctx = || format!("layer {i}");
        let deq = dequantize(layer);
        let ref_w = match reference_weights {
            Some(refs) => {
                if refs[i].dims() != layer.dims() {
                    bail!("layer {i}: reference dims {} vs model {}", refs[i].dims(), layer.dims());
                }
                &refs[i]
            }
            None => &deq,
        };
        let act_bits = cfg.act_bits.unwrap_or(layer.precision.act_bits);
        let spec = ConvSpec {
            stride: cfg.stride,
            padding: cfg.padding,
            act_bits,
        };
        let xq = quantize_activations(&emulated, act_bits).with_context(ctx)?;
        let (out, _) = conv_fgq(layer, &xq, &spec).with_context(ctx)?;
        let check = conv_reference(&deq, &xq.dequantize(), &spec).with_context(ctx)?;
        reference = conv_reference(ref_w, &reference, &spec).with_context(ctx)?;
        let (k, h, w) = out.dims();
        layers.push(LayerSim {
            index: i,
            dims: layer.dims().as_array(),
            act_bits,
            input_frac_bits: xq.values().frac_bits(),
            output_dims: [k, h, w],
            bit_exact: out.data().iter().zip(check.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
            metrics: error_metrics(reference.data(), out.data())?,
        });
        emulated = out;
    }
    let report = SimulateReport {
        command: "simulate",
        seed: cfg.seed,
        reference: if reference_weights.is_some() { "weights" } else { "dequantized" },
        stride: cfg.stride,
        padding: cfg.padding,
        layers,
    };
    Ok((report, emulated))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateReport> {
    let model_path = cfg.model.as_ref().context("--model is required")?;
    let model: Vec<FgqLayer<f64>> =
        read_fgq(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let input = load_activations(cfg.activations.as_ref().context("--activations is required")?)?;
    let refs: Option<Vec<WeightTensor<f64>>> = if cfg.weights.is_empty() {
        None
    } else {
        Some(load_weights(&cfg.weights)?.into_iter().map(|(_, w)| w).collect())
    };
    let (report, output) = simulate_model(&model, refs.as_deref(), &input, cfg)?;
    if let Some(out) = &cfg.out {
        let (k, h, w) = output.dims();
        write_npy(out, &[k, h, w], output.data(), NpyDtype::F64)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(report)
}

impl SimulateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,act_bits,bit_exact,max_abs,rel_frobenius,sqnr_db\n");
        for l in &self.layers {
            out += &csv_line(&[
                l.index.to_string(),
                l.act_bits.to_string(),
                l.bit_exact.to_string(),
                l.metrics.max_abs.to_string(),
                l.metrics.rel_frobenius.to_string(),
                l.metrics.sqnr_db.to_string(),
            ]);
        }
        out
    }
}

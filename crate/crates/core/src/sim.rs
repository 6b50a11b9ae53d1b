//! Convolution emulation: a full-precision direct reference and the
//! low-precision grouped ternary path.
//!
//! The low-precision path works on integers only. For every output and
//! group, activation mantissas selected by the signs are added or
//! subtracted in a checked 32-bit accumulator; the group sum is then scaled
//! by the scale mantissa into a 64-bit accumulator. The real output is that
//! accumulator times `2^-(activation frac bits + scale frac bits)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FgqError, Result};
use crate::fixedpoint::{check_bits, dfp_dequantize, dfp_quantize_auto, DfpTensor};
use crate::grouping::{FgqLayer, LayerWeights, Scales};
use crate::num::Real;
use crate::tensor::WeightTensor;

/// Channel-major `(C, H, W)` real activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor<T> {
    dims: (usize, usize, usize),
    data: Vec<T>,
}

impl<T: Real> ActivationTensor<T> {
    pub fn new(dims: (usize, usize, usize), data: Vec<T>) -> Result<Self> {
        let (c, h, w) = dims;
        if c == 0 || h == 0 || w == 0 {
            return Err(FgqError::shape(format!("activation dims {dims:?} must be positive")));
        }
        if data.len() != c * h * w {
            return Err(FgqError::shape(format!(
                "activation dims {dims:?} need {} values, got {}",
                c * h * w,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    fn at(&self, c: usize, h: usize, w: usize) -> T {
        self.data[(c * self.dims.1 + h) * self.dims.2 + w]
    }
}

/// Activations in dynamic fixed point with one exponent for the tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantActivations {
    dims: (usize, usize, usize),
    values: DfpTensor,
}

impl QuantActivations {
    pub fn new(dims: (usize, usize, usize), values: DfpTensor) -> Result<Self> {
        if dims.0 * dims.1 * dims.2 != values.len() || values.is_empty() {
            return Err(FgqError::shape(format!(
                "activation dims {dims:?} vs {} mantissas",
                values.len()
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn values(&self) -> &DfpTensor {
        &self.values
    }

    pub fn bits(&self) -> u8 {
        self.values.bits()
    }

    pub fn dequantize<T: Real>(&self) -> ActivationTensor<T> {
        ActivationTensor {
            dims: self.dims,
            data: dfp_dequantize(&self.values),
        }
    }
}

/// Quantizes a layer input with a shared exponent chosen from its range.
pub fn quantize_activations<T: Real>(x: &ActivationTensor<T>, bits: u8) -> Result<QuantActivations> {
    Ok(QuantActivations {
        dims: x.dims,
        values: dfp_quantize_auto(&x.data, bits)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    /// Expected activation width for the low-precision path.
    pub act_bits: u8,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            act_bits: 8,
        }
    }
}

impl ConvSpec {
    /// `floor((in + 2 pad - kernel) / stride) + 1` for both spatial axes.
    pub fn output_hw(&self, input: (usize, usize), kernel: (usize, usize)) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return Err(FgqError::Domain("stride must be at least 1".into()));
        }
        let axis = |n: usize, k: usize| {
            let padded = n + 2 * self.padding;
            if padded < k {
                Err(FgqError::shape(format!(
                    "kernel {k} larger than padded input {padded}"
                )))
            } else {
                Ok((padded - k) / self.stride + 1)
            }
        };
        Ok((axis(input.0, kernel.0)?, axis(input.1, kernel.1)?))
    }

    /// Input coordinate under output `o`, kernel tap `t`, or `None` in the padding.
    #[inline]
    fn source(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        (o * self.stride + t)
            .checked_sub(self.padding)
            .filter(|&i| i < extent)
    }
}

/// Naive direct convolution in full precision; output is `(K, H_out, W_out)`.
pub fn conv_reference<T: Real>(
    w: &WeightTensor<T>,
    x: &ActivationTensor<T>,
    spec: &ConvSpec,
) -> Result<ActivationTensor<T>> {
    let d = w.dims();
    let (c_in, h, wd) = x.dims();
    if d.c != c_in {
        return Err(FgqError::shape(format!(
            "weights expect {} input channels, activations have {c_in}",
            d.c
        )));
    }
    let (ho, wo) = spec.output_hw((h, wd), (d.r, d.s))?;
    let mut out = vec![T::zero(); d.k * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(k, plane)| {
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = T::zero();
                for c in 0..d.c {
                    for r in 0..d.r {
                        let Some(ih) = spec.source(oh, r, h) else { continue };
                        for s in 0..d.s {
                            let Some(iw) = spec.source(ow, s, wd) else { continue };
                            acc = acc + w.get(k, c, r, s) * x.at(c, ih, iw);
                        }
                    }
                }
                plane[oh * wo + ow] = acc;
            }
        }
    });
    ActivationTensor::new((d.k, ho, wo), out)
}

/// Integer state of a low-precision convolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvTrace {
    /// One accumulator per output element, `(K, H_out, W_out)` order.
    pub accumulators: Vec<i64>,
    /// Output value is `accumulator * 2^-shift`.
    pub shift: i32,
}

struct GroupRef {
    k: usize,
    r: usize,
    s: usize,
    first_channel: usize,
    len: usize,
    stream_start: usize,
}

/// Emulates the layer on quantized activations. Returns the real outputs and
/// the integer accumulators they were derived from.
pub fn conv_fgq<T: Real>(
    layer: &FgqLayer<T>,
    x: &QuantActivations,
    spec: &ConvSpec,
) -> Result<(ActivationTensor<T>, ConvTrace)> {
    layer.validate()?;
    check_bits(spec.act_bits)?;
    if x.bits() != spec.act_bits {
        return Err(FgqError::Precision(format!(
            "activations are {}-bit, convolution expects {}-bit",
            x.bits(),
            spec.act_bits
        )));
    }
    let d = layer.dims();
    let (c_in, h, wd) = x.dims();
    if d.c != c_in {
        return Err(FgqError::shape(format!(
            "layer expects {} input channels, activations have {c_in}",
            d.c
        )));
    }
    let (ho, wo) = spec.output_hw((h, wd), (d.r, d.s))?;
    let xm = x.values().mantissas();
    let x_at = |c: usize, ih: usize, iw: usize| xm[(c * h + ih) * wd + iw] as i32;

    let per_filter: Vec<Result<Vec<i64>>> = match &layer.weights {
        LayerWeights::Ternary {
            signs,
            scales,
            scales_neg,
        } => {
            if scales_neg.is_some() {
                return Err(FgqError::Precision(
                    "two-scale layers are not emulated".into(),
                ));
            }
            let Scales::Quantized(alpha) = scales else {
                return Err(FgqError::Precision(
                    "scales must be fixed point for the low-precision path".into(),
                ));
            };
            let p = &layer.partition;
            let mut groups = Vec::with_capacity(p.num_groups());
            let mut start = 0;
            for g in 0..p.num_groups() {
                let (k, run, r, s) = p.group_coords(g);
                let ch = p.channels(run);
                groups.push(GroupRef {
                    k,
                    r,
                    s,
                    first_channel: ch.start,
                    len: ch.len(),
                    stream_start: start,
                });
                start += ch.len();
            }
            let per_k = p.num_groups() / d.k;
            let am = alpha.mantissas();
            (0..d.k)
                .into_par_iter()
                .map(|k| {
                    let mut acc_out = vec![0i64; ho * wo];
                    let filter_groups = &groups[k * per_k..(k + 1) * per_k];
                    for oh in 0..ho {
                        for ow in 0..wo {
                            let mut acc = 0i64;
                            for (gi, grp) in filter_groups.iter().enumerate() {
                                debug_assert_eq!(grp.k, k);
                                let (Some(ih), Some(iw)) =
                                    (spec.source(oh, grp.r, h), spec.source(ow, grp.s, wd))
                                else {
                                    continue;
                                };
                                let g = k * per_k + gi;
                                let overflow = || FgqError::AccumulatorOverflow {
                                    filter: k,
                                    row: oh,
                                    col: ow,
                                    group: g,
                                };
                                let mut tern: i32 = 0;
                                for j in 0..grp.len {
                                    let v = x_at(grp.first_channel + j, ih, iw);
                                    tern = match signs.get(grp.stream_start + j) {
                                        1 => tern.checked_add(v),
                                        -1 => tern.checked_sub(v),
                                        _ => Some(tern),
                                    }
                                    .ok_or_else(overflow)?;
                                }
                                acc = acc
                                    .checked_add(am[g] as i64 * tern as i64)
                                    .ok_or_else(overflow)?;
                            }
                            acc_out[oh * wo + ow] = acc;
                        }
                    }
                    Ok(acc_out)
                })
                .collect()
        }
        LayerWeights::Fixed(wq) => {
            let wm = wq.mantissas();
            (0..d.k)
                .into_par_iter()
                .map(|k| {
                    let mut acc_out = vec![0i64; ho * wo];
                    for oh in 0..ho {
                        for ow in 0..wo {
                            let mut acc: i32 = 0;
                            for c in 0..d.c {
                                for r in 0..d.r {
                                    let Some(ih) = spec.source(oh, r, h) else { continue };
                                    for s in 0..d.s {
                                        let Some(iw) = spec.source(ow, s, wd) else { continue };
                                        let prod = wm[d.offset(k, c, r, s)] as i32 * x_at(c, ih, iw);
                                        acc = acc.checked_add(prod).ok_or(
                                            FgqError::AccumulatorOverflow {
                                                filter: k,
                                                row: oh,
                                                col: ow,
                                                group: 0,
                                            },
                                        )?;
                                    }
                                }
                            }
                            acc_out[oh * wo + ow] = acc as i64;
                        }
                    }
                    Ok(acc_out)
                })
                .collect()
        }
    };

    let mut accumulators = Vec::with_capacity(d.k * ho * wo);
    for plane in per_filter {
        accumulators.extend(plane?);
    }
    let weight_frac = match &layer.weights {
        LayerWeights::Ternary {
            scales: Scales::Quantized(a),
            ..
        } => a.frac_bits(),
        LayerWeights::Fixed(wq) => wq.frac_bits(),
        LayerWeights::Ternary { .. } => unreachable!("checked above"),
    };
    let shift = x.values().frac_bits() + weight_frac;
    let unit = 2f64.powi(-shift);
    let out = accumulators.iter().map(|&a| T::of(a as f64 * unit)).collect();
    Ok((
        ActivationTensor::new((d.k, ho, wo), out)?,
        ConvTrace {
            accumulators,
            shift,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub max_abs: f64,
    /// `||ref - test|| / ||ref||`; 0 when both are zero.
    pub rel_frobenius: f64,
    /// `20 log10(||ref|| / ||ref - test||)`; infinite when equal.
    pub sqnr_db: f64,
}

pub fn error_metrics<T: Real>(reference: &[T], test: &[T]) -> Result<ErrorMetrics> {
    if reference.len() != test.len() {
        return Err(FgqError::shape(format!(
            "reference has {} values, test has {}",
            reference.len(),
            test.len()
        )));
    }
    let (mut sig, mut noise, mut max_abs) = (0f64, 0f64, 0f64);
    for (&a, &b) in reference.iter().zip(test) {
        let (a, b) = (a.to_f64_lossless(), b.to_f64_lossless());
        sig += a * a;
        noise += (a - b) * (a - b);
        max_abs = max_abs.max((a - b).abs());
    }
    let (sig, noise) = (sig.sqrt(), noise.sqrt());
    let rel_frobenius = match (sig == 0.0, noise == 0.0) {
        (_, true) => 0.0,
        (true, false) => f64::INFINITY,
        _ => noise / sig,
    };
    let sqnr_db = if noise == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (sig / noise).log10()
    };
    Ok(ErrorMetrics {
        max_abs,
        rel_frobenius,
        sqnr_db,
    })
}

//! FGQ1 model files: a header followed by one block per layer, all integers
//! little-endian. See `FORMAT.md` at the repository root for the layout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::packed::{packed_len, PackedTernary};
use crate::error::{FgqError, Result};
use crate::fixedpoint::{check_bits, DfpTensor};
use crate::grouping::{FgqLayer, GroupPartition, LayerWeights, Precision, Scales};
use crate::num::Real;

pub const MAGIC: &[u8; 4] = b"FGQ1";
pub const VERSION: u16 = 1;

fn write_dfp<W: Write>(w: &mut W, t: &DfpTensor) -> Result<()> {
    let f = i8::try_from(t.frac_bits()).map_err(|_| {
        FgqError::Domain(format!("frac_bits {} does not fit in a byte", t.frac_bits()))
    })?;
    w.write_all(&f.to_le_bytes())?;
    match t.bits() {
        8 => {
            let bytes: Vec<u8> = t.mantissas().iter().map(|&m| m as u8).collect();
            w.write_all(&bytes)?;
        }
        4 => {
            let bytes: Vec<u8> = t
                .mantissas()
                .chunks(2)
                .map(|pair| {
                    let lo = pair[0] as u8 & 0x0f;
                    let hi = pair.get(1).map_or(0, |&m| m as u8 & 0x0f);
                    lo | (hi << 4)
                })
                .collect();
            w.write_all(&bytes)?;
        }
        b => unreachable!("DfpTensor with {b} bits"),
    }
    Ok(())
}

fn write_layer<T: Real, W: Write>(w: &mut W, layer: &FgqLayer<T>) -> Result<()> {
    layer.validate()?;
    let dims = layer.dims();
    for d in dims.as_array().into_iter().chain([layer.partition.group_size()]) {
        let v = u32::try_from(d)
            .map_err(|_| FgqError::Domain(format!("dimension {d} exceeds u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    let p = layer.precision;
    w.write_all(&[p.weight_bits, p.scale_bits, p.act_bits])?;
    match &layer.weights {
        LayerWeights::Ternary {
            signs,
            scales,
            scales_neg,
        } => {
            if scales_neg.is_some() {
                return Err(FgqError::Precision(
                    "two-scale layers are a diagnostic and cannot be serialized".into(),
                ));
            }
            let Scales::Quantized(t) = scales else {
                return Err(FgqError::Precision(
                    "scales must be quantized to fixed point before serializing".into(),
                ));
            };
            if t.bits() != p.scale_bits {
                return Err(FgqError::Precision("scale tag does not match mantissa width".into()));
            }
            write_dfp(w, t)?;
            let count = u32::try_from(signs.len())
                .map_err(|_| FgqError::Domain("too many weights for u32 count".into()))?;
            w.write_all(&count.to_le_bytes())?;
            w.write_all(signs.as_bytes())?;
        }
        LayerWeights::Fixed(t) => write_dfp(w, t)?,
    }
    Ok(())
}

/// Serializes layers to any writer.
pub fn write_fgq_to<T: Real, W: Write>(w: &mut W, layers: &[FgqLayer<T>]) -> Result<()> {
    let count = u16::try_from(layers.len())
        .map_err(|_| FgqError::Domain(format!("{} layers exceed u16", layers.len())))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for layer in layers {
        write_layer(w, layer)?;
    }
    Ok(())
}

pub fn write_fgq<T: Real>(layers: &[FgqLayer<T>], path: impl AsRef<Path>) -> Result<()> {
    // Serialize fully before touching the file so a rejected model leaves nothing behind.
    let mut buf = Vec::new();
    write_fgq_to(&mut buf, layers)?;
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&buf)?;
    f.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(FgqError::format(format!(
                "truncated file: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dfp(&mut self, bits: u8, count: usize) -> Result<DfpTensor> {
        check_bits(bits).map_err(|_| FgqError::format(format!("bad mantissa width {bits}")))?;
        let frac_bits = self.u8()? as i8 as i32;
        let mantissas = match bits {
            8 => self.take(count)?.iter().map(|&b| b as i8).collect(),
            _ => {
                let bytes = self.take(count.div_ceil(2))?;
                if count % 2 == 1 && bytes[bytes.len() - 1] >> 4 != 0 {
                    return Err(FgqError::format("nonzero pad nibble in 4-bit block"));
                }
                (0..count)
                    .map(|i| {
                        let nib = (bytes[i / 2] >> (4 * (i % 2))) & 0x0f;
                        ((nib << 4) as i8) >> 4
                    })
                    .collect()
            }
        };
        DfpTensor::from_mantissas(bits, frac_bits, mantissas)
    }
}

fn read_layer<T: Real>(c: &mut Cursor<'_>) -> Result<FgqLayer<T>> {
    let mut d = [0usize; 5];
    for v in &mut d {
        *v = c.u32()? as usize;
    }
    let partition = GroupPartition::new((d[0], d[1], d[2], d[3]), d[4])
        .map_err(|e| FgqError::format(format!("bad layer header: {e}")))?;
    let precision = Precision {
        weight_bits: c.u8()?,
        scale_bits: c.u8()?,
        act_bits: c.u8()?,
    };
    check_bits(precision.act_bits)
        .map_err(|_| FgqError::format(format!("bad activation width {}", precision.act_bits)))?;
    let n = partition.dims().len();
    let weights = match precision.weight_bits {
        2 => {
            let scales = c.dfp(precision.scale_bits, partition.num_groups())?;
            let count = c.u32()? as usize;
            if count != n {
                return Err(FgqError::format(format!(
                    "sign block holds {count} codes, layer has {n} weights"
                )));
            }
            let bytes = c.take(packed_len(count))?.to_vec();
            LayerWeights::Ternary {
                signs: PackedTernary::from_bytes(count, bytes)?,
                scales: Scales::Quantized(scales),
                scales_neg: None,
            }
        }
        bits @ (4 | 8) => LayerWeights::Fixed(c.dfp(bits, n)?),
        other => return Err(FgqError::format(format!("bad weight width {other}"))),
    };
    Ok(FgqLayer {
        partition,
        precision,
        weights,
    })
}

/// Parses a complete FGQ1 image.
pub fn read_fgq_from<T: Real>(bytes: &[u8]) -> Result<Vec<FgqLayer<T>>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic = c.take(4)?;
    if magic != MAGIC {
        return Err(if &magic[..3] == b"FGQ" {
            FgqError::UnknownVersion(format!("magic {:?}", String::from_utf8_lossy(magic)))
        } else {
            FgqError::format("bad magic")
        });
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(FgqError::UnknownVersion(format!("version {version}")));
    }
    let count = c.u16()? as usize;
    let layers = (0..count)
        .map(|_| read_layer(&mut c))
        .collect::<Result<Vec<_>>>()?;
    if c.pos != bytes.len() {
        return Err(FgqError::format(format!(
            "{} trailing bytes after last layer",
            bytes.len() - c.pos
        )));
    }
    Ok(layers)
}

pub fn read_fgq<T: Real>(path: impl AsRef<Path>) -> Result<Vec<FgqLayer<T>>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    read_fgq_from(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::packed::pack_ternary;

    fn smallest() -> FgqLayer<f64> {
        FgqLayer {
            partition: GroupPartition::new((1, 4, 1, 1), 4).unwrap(),
            precision: Precision::default(),
            weights: LayerWeights::Ternary {
                signs: pack_ternary(&[1, 0, -1, 1]).unwrap(),
                scales: Scales::Quantized(DfpTensor::from_mantissas(8, 7, vec![115]).unwrap()),
                scales_neg: None,
            },
        }
    }

    fn image(layers: &[FgqLayer<f64>]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_fgq_to(&mut buf, layers).unwrap();
        buf
    }

    #[test]
    fn smallest_model_bytes() {
        let bytes = image(&[smallest()]);
        // header 8 + dims/N 20 + tag 3 + scales 1+1 + count 4 + signs 1
        assert_eq!(bytes.len(), 38);
        assert_eq!(&bytes[..8], b"FGQ1\x01\x00\x01\x00");
        assert_eq!(&bytes[28..31], &[2, 8, 8]);
        assert_eq!(bytes[31], 7);
        assert_eq!(bytes[32], 115);
        assert_eq!(&bytes[33..37], &[4, 0, 0, 0]);
        assert_eq!(bytes[37], 0b01_11_00_01);
        let back: Vec<FgqLayer<f64>> = read_fgq_from(&bytes).unwrap();
        assert_eq!(back, vec![smallest()]);
    }

    #[test]
    fn rejects_unknown_version_and_magic() {
        let mut bytes = image(&[smallest()]);
        bytes[3] = b'2';
        assert!(matches!(read_fgq_from::<f64>(&bytes), Err(FgqError::UnknownVersion(_))));
        let mut bytes = image(&[smallest()]);
        bytes[4] = 2;
        assert!(matches!(read_fgq_from::<f64>(&bytes), Err(FgqError::UnknownVersion(_))));
        let mut bytes = image(&[smallest()]);
        bytes[0] = b'X';
        assert!(matches!(read_fgq_from::<f64>(&bytes), Err(FgqError::Format(_))));
    }

    #[test]
    fn rejects_truncation_reserved_code_and_pad_bits() {
        let bytes = image(&[smallest()]);
        for cut in [3, 10, bytes.len() - 1] {
            assert!(matches!(read_fgq_from::<f64>(&bytes[..cut]), Err(FgqError::Format(_))));
        }
        let mut bad = bytes.clone();
        bad[37] = 0b10;
        assert!(read_fgq_from::<f64>(&bad).is_err());

        let mut layer = smallest();
        layer.partition = GroupPartition::new((1, 3, 1, 1), 4).unwrap();
        layer.weights = LayerWeights::Ternary {
            signs: pack_ternary(&[1, 0, -1]).unwrap(),
            scales: Scales::Quantized(DfpTensor::from_mantissas(8, 7, vec![1]).unwrap()),
            scales_neg: None,
        };
        let mut bytes = image(&[layer]);
        let last = bytes.len() - 1;
        bytes[last] |= 0b01 << 6;
        assert!(matches!(read_fgq_from::<f64>(&bytes), Err(FgqError::Format(_))));

        let mut bytes = image(&[smallest()]);
        bytes.push(0);
        assert!(read_fgq_from::<f64>(&bytes).is_err());
    }

    #[test]
    fn refuses_unquantized_or_two_scale_layers() {
        let mut layer = smallest();
        layer.weights = LayerWeights::Ternary {
            signs: pack_ternary(&[1, 0, -1, 1]).unwrap(),
            scales: Scales::Exact(vec![0.9]),
            scales_neg: None,
        };
        assert!(write_fgq_to(&mut Vec::new(), &[layer]).is_err());
    }

    #[test]
    fn four_bit_scales_and_fixed_layers() {
        let layer4 = FgqLayer::<f64> {
            partition: GroupPartition::new((1, 3, 1, 1), 1).unwrap(),
            precision: Precision {
                weight_bits: 2,
                scale_bits: 4,
                act_bits: 4,
            },
            weights: LayerWeights::Ternary {
                signs: pack_ternary(&[1, -1, 0]).unwrap(),
                scales: Scales::Quantized(DfpTensor::from_mantissas(4, -2, vec![7, -8, 3]).unwrap()),
                scales_neg: None,
            },
        };
        let fixed = FgqLayer::<f64> {
            partition: GroupPartition::new((2, 1, 1, 1), 1).unwrap(),
            precision: Precision {
                weight_bits: 8,
                scale_bits: 8,
                act_bits: 8,
            },
            weights: LayerWeights::Fixed(DfpTensor::from_mantissas(8, 3, vec![-128, 127]).unwrap()),
        };
        let layers = vec![layer4, fixed];
        let bytes = image(&layers);
        let back: Vec<FgqLayer<f64>> = read_fgq_from(&bytes).unwrap();
        assert_eq!(back, layers);
        assert_eq!(image(&back), bytes);
    }
}

//! NPY v1.0/v2.0 reader and writer for little-endian `float32`/`float64`
//! C-order arrays.
//!
//! The writer reproduces numpy's header layout exactly (dict key order,
//! spacing, 64-byte alignment), so `write(read(f)) == f` for files numpy
//! produced.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{FgqError, Result};
use crate::num::Real;
use crate::tensor::{Dims, WeightTensor};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpyDtype {
    F32,
    F64,
}

impl NpyDtype {
    pub fn descr(self) -> &'static str {
        match self {
            NpyDtype::F32 => "<f4",
            NpyDtype::F64 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            NpyDtype::F32 => 4,
            NpyDtype::F64 => 8,
        }
    }
}

/// An NPY array with values widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: NpyDtype,
    pub data: Vec<f64>,
}

#[derive(Debug, PartialEq)]
struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

// Minimal parser for the Python dict literal numpy writes.
struct DictParser<'a> {
    s: &'a [u8],
    pos: usize,
}

enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl<'a> DictParser<'a> {
    fn err(&self, what: &str) -> FgqError {
        FgqError::format(format!("npy header: {what} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        let quote = match self.s.get(self.pos) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos >= self.s.len() {
            return Err(self.err("unterminated string"));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn value(&mut self) -> Result<Value> {
        self.skip_ws();
        match self.s.get(self.pos) {
            Some(b'\'' | b'"') => Ok(Value::Str(self.string()?)),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    if self.eat(b')') {
                        break;
                    }
                    self.skip_ws();
                    let start = self.pos;
                    while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                    let d = digits
                        .parse::<usize>()
                        .map_err(|_| self.err("bad shape entry"))?;
                    dims.push(d);
                    if !self.eat(b',') {
                        self.expect(b')')?;
                        break;
                    }
                }
                Ok(Value::Tuple(dims))
            }
            _ => {
                let rest = &self.s[self.pos..];
                if rest.starts_with(b"True") {
                    self.pos += 4;
                    Ok(Value::Bool(true))
                } else if rest.starts_with(b"False") {
                    self.pos += 5;
                    Ok(Value::Bool(false))
                } else {
                    Err(self.err("unexpected value"))
                }
            }
        }
    }

    fn header(mut self) -> Result<Header> {
        self.expect(b'{')?;
        let (mut descr, mut fortran, mut shape) = (None, None, None);
        loop {
            if self.eat(b'}') {
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            match (key.as_str(), self.value()?) {
                ("descr", Value::Str(s)) => descr = Some(s),
                ("fortran_order", Value::Bool(b)) => fortran = Some(b),
                ("shape", Value::Tuple(t)) => shape = Some(t),
                (k, _) => return Err(self.err(&format!("unexpected key or value for '{k}'"))),
            }
            if !self.eat(b',') {
                self.expect(b'}')?;
                break;
            }
        }
        match (descr, fortran, shape) {
            (Some(descr), Some(fortran_order), Some(shape)) => Ok(Header {
                descr,
                fortran_order,
                shape,
            }),
            _ => Err(FgqError::format("npy header missing descr/fortran_order/shape")),
        }
    }
}

fn format_header(dtype: NpyDtype, shape: &[usize]) -> String {
    let shape_str = match shape {
        [one] => format!("({one},)"),
        _ => format!(
            "({})",
            shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
        ),
    };
    format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {shape_str}, }}",
        dtype.descr()
    )
}

/// Parses an NPY stream.
pub fn read_npy_from<R: Read>(reader: &mut R) -> Result<NpyArray> {
    let mut magic = [0u8; 8];
    reader
        .read_exact(&mut magic)
        .map_err(|_| FgqError::format("npy file shorter than its magic"))?;
    if &magic[..6] != MAGIC {
        return Err(FgqError::format("bad npy magic"));
    }
    let header_len = match (magic[6], magic[7]) {
        (1, 0) => {
            let mut b = [0u8; 2];
            reader.read_exact(&mut b)?;
            u16::from_le_bytes(b) as usize
        }
        (2, 0) => {
            let mut b = [0u8; 4];
            reader.read_exact(&mut b)?;
            u32::from_le_bytes(b) as usize
        }
        (major, minor) => {
            return Err(FgqError::format(format!(
                "unsupported npy version {major}.{minor}"
            )))
        }
    };
    let mut raw = vec![0u8; header_len];
    reader
        .read_exact(&mut raw)
        .map_err(|_| FgqError::format("truncated npy header"))?;
    let header = DictParser { s: &raw, pos: 0 }.header()?;

    let dtype = match header.descr.as_str() {
        "<f4" => NpyDtype::F32,
        "<f8" => NpyDtype::F64,
        other => {
            return Err(FgqError::UnsupportedLayout(format!(
                "dtype '{other}' (need '<f4' or '<f8')"
            )))
        }
    };
    if header.fortran_order {
        return Err(FgqError::UnsupportedLayout("Fortran-order array".into()));
    }

    let count: usize = header.shape.iter().product();
    let mut bytes = vec![0u8; count * dtype.size()];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| FgqError::format("truncated npy data"))?;
    let data: Vec<f64> = match dtype {
        NpyDtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        NpyDtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(FgqError::Data(format!("non-finite value at flat index {i}")));
    }
    Ok(NpyArray {
        shape: header.shape,
        dtype,
        data,
    })
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray> {
    let mut r = BufReader::new(File::open(path)?);
    read_npy_from(&mut r)
}

/// Serializes `data` with the given shape. `f64 -> f32` narrowing rounds to nearest.
pub fn write_npy_to<W: Write>(
    writer: &mut W,
    shape: &[usize],
    data: &[f64],
    dtype: NpyDtype,
) -> Result<()> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(FgqError::shape(format!(
            "shape {shape:?} needs {count} values, got {}",
            data.len()
        )));
    }
    let dict = format_header(dtype, shape);
    // dict + padding + '\n', with the whole preamble a multiple of ALIGN.
    let unpadded = dict.len() + 1;
    let (version, prefix) = if 10 + unpadded < u16::MAX as usize {
        (1u8, 10)
    } else {
        (2u8, 12)
    };
    let pad = ALIGN - (prefix + unpadded) % ALIGN;
    let header_len = unpadded + pad;

    writer.write_all(MAGIC)?;
    writer.write_all(&[version, 0])?;
    if version == 1 {
        writer.write_all(&(header_len as u16).to_le_bytes())?;
    } else {
        writer.write_all(&(header_len as u32).to_le_bytes())?;
    }
    writer.write_all(dict.as_bytes())?;
    writer.write_all(&vec![b' '; pad])?;
    writer.write_all(b"\n")?;
    for &v in data {
        match dtype {
            NpyDtype::F32 => writer.write_all(&(v as f32).to_le_bytes())?,
            NpyDtype::F64 => writer.write_all(&v.to_le_bytes())?,
        }
    }
    Ok(())
}

pub fn write_npy(
    path: impl AsRef<Path>,
    shape: &[usize],
    data: &[f64],
    dtype: NpyDtype,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_npy_to(&mut w, shape, data, dtype)?;
    w.flush()?;
    Ok(())
}

impl NpyArray {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_npy(path, &self.shape, &self.data, self.dtype)
    }

    /// Interprets a 4-D array as convolution weights.
    pub fn into_weights<T: Real>(self) -> Result<WeightTensor<T>> {
        let [k, c, r, s] = self.shape[..] else {
            return Err(FgqError::UnsupportedLayout(format!(
                "weights must be 4-D (K, C, R, S), got shape {:?}",
                self.shape
            )));
        };
        WeightTensor::new(
            Dims::new(k, c, r, s),
            self.data.into_iter().map(T::of).collect(),
        )
    }
}

/// Loads a 4-D `float32`/`float64` NPY file as a weight tensor.
pub fn load_npy<T: Real>(path: impl AsRef<Path>) -> Result<WeightTensor<T>> {
    read_npy(path)?.into_weights()
}

/// Saves a weight tensor; `dtype` selects the stored precision.
pub fn save_npy<T: Real>(
    tensor: &WeightTensor<T>,
    path: impl AsRef<Path>,
    dtype: NpyDtype,
) -> Result<()> {
    let data: Vec<f64> = tensor.data().iter().map(|v| v.to_f64_lossless()).collect();
    write_npy(path, &tensor.dims().as_array(), &data, dtype)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn to_bytes(shape: &[usize], data: &[f64], dtype: NpyDtype) -> Vec<u8> {
        let mut buf = Vec::new();
        write_npy_to(&mut buf, shape, data, dtype).unwrap();
        buf
    }

    #[test]
    fn header_matches_numpy_layout() {
        let bytes = to_bytes(&[2, 4, 3, 3], &vec![0.0; 72], NpyDtype::F32);
        assert_eq!(bytes.len(), 128 + 72 * 4);
        assert_eq!(&bytes[..10], b"\x93NUMPY\x01\x00v\x00");
        let dict = std::str::from_utf8(&bytes[10..128]).unwrap();
        assert!(dict.starts_with(
            "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 4, 3, 3), }"
        ));
        assert!(dict.ends_with(" \n"));
        assert_eq!(format_header(NpyDtype::F64, &[5]), "{'descr': '<f8', 'fortran_order': False, 'shape': (5,), }");
    }

    #[test]
    fn synthetic_counting_tensor() {
        let data: Vec<f64> = (0..72).map(f64::from).collect();
        let bytes = to_bytes(&[2, 4, 3, 3], &data, NpyDtype::F32);
        let arr = read_npy_from(&mut Cursor::new(bytes)).unwrap();
        let w = arr.into_weights::<f64>().unwrap();
        assert_eq!(w.dims(), Dims::new(2, 4, 3, 3));
        assert_eq!(w.data()[0], 0.0);
        assert_eq!(w.data()[71], 71.0);
    }

    fn replace(mut bytes: Vec<u8>, from: &[u8], to: &[u8]) -> Vec<u8> {
        let at = bytes.windows(from.len()).position(|w| w == from).unwrap();
        bytes[at..at + to.len()].copy_from_slice(to);
        bytes
    }

    #[test]
    fn fortran_order_is_unsupported() {
        let bytes = replace(to_bytes(&[1, 1, 1, 1], &[1.0], NpyDtype::F64), b"False", b"True ");
        let err = read_npy_from(&mut Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, FgqError::UnsupportedLayout(_)), "{err}");
    }

    #[test]
    fn rejects_bad_magic_rank_dtype_and_nan() {
        let mut bytes = to_bytes(&[1, 1, 1, 1], &[1.0], NpyDtype::F64);
        bytes[1] = b'X';
        assert!(matches!(
            read_npy_from(&mut Cursor::new(bytes)),
            Err(FgqError::Format(_))
        ));

        let bytes = to_bytes(&[3, 2], &[0.0; 6], NpyDtype::F64);
        let arr = read_npy_from(&mut Cursor::new(bytes)).unwrap();
        assert!(matches!(
            arr.into_weights::<f64>(),
            Err(FgqError::UnsupportedLayout(_))
        ));

        let bytes = replace(to_bytes(&[1], &[0.0], NpyDtype::F64), b"<f8", b"<i8");
        assert!(matches!(
            read_npy_from(&mut Cursor::new(bytes)),
            Err(FgqError::UnsupportedLayout(_))
        ));

        let bytes = to_bytes(&[2], &[1.0, f64::NAN], NpyDtype::F64);
        assert!(matches!(
            read_npy_from(&mut Cursor::new(bytes)),
            Err(FgqError::Data(_))
        ));
    }

    #[test]
    fn truncated_data_is_format_error() {
        let mut bytes = to_bytes(&[4], &[1.0; 4], NpyDtype::F64);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            read_npy_from(&mut Cursor::new(bytes)),
            Err(FgqError::Format(_))
        ));
    }
}

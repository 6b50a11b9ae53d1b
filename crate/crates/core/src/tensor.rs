//! Dense 4-D convolution weights.

use serde::{Deserialize, Serialize};

use crate::error::{FgqError, Result};
use crate::num::Real;

/// Filter-bank dimensions: output filters, input channels, kernel rows, kernel cols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub k: usize,
    pub c: usize,
    pub r: usize,
    pub s: usize,
}

impl Dims {
    pub const fn new(k: usize, c: usize, r: usize, s: usize) -> Self {
        Self { k, c, r, s }
    }

    pub const fn len(&self) -> usize {
        self.k * self.c * self.r * self.s
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major offset of `(k, c, r, s)`.
    #[inline]
    pub const fn offset(&self, k: usize, c: usize, r: usize, s: usize) -> usize {
        ((k * self.c + c) * self.r + r) * self.s + s
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.k, self.c, self.r, self.s]
    }
}

impl From<(usize, usize, usize, usize)> for Dims {
    fn from((k, c, r, s): (usize, usize, usize, usize)) -> Self {
        Self { k, c, r, s }
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.k, self.c, self.r, self.s)
    }
}

/// Full-precision weights stored row-major in `K, C, R, S` order.
///
/// Values are always finite; the constructor rejects NaN and infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Real> WeightTensor<T> {
    pub fn new(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        if data.len() != dims.len() {
            return Err(FgqError::shape(format!(
                "dims {dims} need {} values, got {}",
                dims.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FgqError::Data(format!("non-finite weight at flat index {i}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: impl Into<Dims>) -> Self {
        let dims = dims.into();
        Self {
            dims,
            data: vec![T::zero(); dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, k: usize, c: usize, r: usize, s: usize) -> T {
        self.data[self.dims.offset(k, c, r, s)]
    }

    /// Converts the scalar type, e.g. `f32` storage to `f64` compute.
    pub fn cast<U: Real>(&self) -> WeightTensor<U> {
        WeightTensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossless())).collect(),
        }
    }
}

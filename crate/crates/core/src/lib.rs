//! Fine-grained ternary quantization of convolution weights.
//!
//! Weights are split into groups of `N` input channels per filter tap; each
//! group is approximated by `alpha * {-1, 0, +1}` with its own scale, the
//! scales and activations are stored as dynamic fixed point, and the
//! resulting low-precision convolution is emulated exactly with 32-bit
//! ternary accumulators.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below name the common instantiations.

pub mod distfit;
pub mod error;
pub mod fixedpoint;
pub mod grouping;
pub mod io;
pub mod num;
pub mod perf;
pub mod sim;
pub mod tensor;
pub mod ternary;

pub use distfit::{DistFit, Family, FitComparison, FitOptions, GaussianRule};
pub use error::{FgqError, Result};
pub use fixedpoint::DfpTensor;
pub use grouping::{
    FgqLayer, GroupPartition, LayerWeights, Precision, Scales, Solver, TernarizeOptions,
    Ternarized,
};
pub use io::{NpyArray, NpyDtype, PackedTernary};
pub use num::Real;
pub use perf::{CostModel, LayerShape, OpsReport};
pub use sim::{ActivationTensor, ConvSpec, ConvTrace, ErrorMetrics, QuantActivations};
pub use tensor::{Dims, WeightTensor};
pub use ternary::TernarySolution;

pub type WeightTensor64 = WeightTensor<f64>;
pub type WeightTensor32 = WeightTensor<f32>;
pub type TernarySolution64 = TernarySolution<f64>;
pub type TernarySolution32 = TernarySolution<f32>;
pub type FgqLayer64 = FgqLayer<f64>;
pub type FgqLayer32 = FgqLayer<f32>;
pub type DistFit64 = DistFit<f64>;
pub type DistFit32 = DistFit<f32>;
pub type ActivationTensor64 = ActivationTensor<f64>;
pub type ActivationTensor32 = ActivationTensor<f32>;
pub type Ternarized64 = Ternarized<f64>;

//! On-disk formats: NPY arrays, 2-bit ternary packing and the FGQ1 model file.

pub mod fgq;
pub mod npy;
pub mod packed;

pub use fgq::{read_fgq, read_fgq_from, write_fgq, write_fgq_to};
pub use npy::{load_npy, read_npy, save_npy, write_npy, NpyArray, NpyDtype};
pub use packed::{pack_ternary, PackedTernary};

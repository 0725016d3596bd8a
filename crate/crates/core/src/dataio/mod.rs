//! Binary array I/O (NPY v1.0), the single-file checkpoint format, and the
//! synthetic desk-scale dataset generator.

pub mod checkpoint;
mod crc32;
pub mod npy;
pub mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use crc32::crc32;
pub use npy::{read_npy, write_npy, NpyDType};
pub use synth::{gen_synthetic, SyntheticGen, SyntheticTask};

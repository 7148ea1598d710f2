//! Frequency machinery: shearlet decomposition, Haar lifting, block DCT.

pub mod dct;
pub mod fft;
pub mod lwt;
pub mod shearlet;

pub use dct::{dct_block, idct_block, zigzag_index, DctBasis};
pub use lwt::{lwt_forward, lwt_inverse, WaveletQuad};
pub use shearlet::{ShearletPyramid, ShearletSystem, DIRECTIONS};

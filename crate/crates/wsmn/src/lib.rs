//! Blind dual-purpose image watermarking in the shearlet domain.
//!
//! The pipeline embeds a robust copyright logo into approximate-band DCT
//! coefficients via quantization and a semi-fragile authentication sequence
//! into directional DC coefficients via correlation, with per-block strengths
//! driven by texture clustering. Extraction is blind: it needs only the
//! received image, the three keys, and the quantization step recorded in a
//! sidecar. An NSGA-II optimizer tunes the two embedding steps per image
//! against robustness and distortion objectives.

pub mod attacks;
pub mod embed;
pub mod error;
pub mod extract;
pub mod image;
pub mod marks;
pub mod metrics;
pub mod optimize;
pub mod synth;
pub mod texture;
pub mod transforms;

pub use error::{Error, Result};
pub use image::{Image, Plane};

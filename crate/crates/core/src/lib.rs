//! Arbitrary-resolution visual token pipeline.
//!
//! The crate covers the image side of a tiled vision-language front end:
//!
//! - [`imaging`]: 8-bit rasters, binary PPM/PGM IO, bilinear resize.
//! - [`tiling`]: overlapping tile grids with exact-fit resizing (378px tiles,
//!   266px stride, 112px shared margins by default).
//! - [`numerics`]: deterministic f64 matrix kernels and a finite-difference
//!   oracle.
//! - [`features`]: a seeded pseudo encoder standing in for the frozen vision
//!   tower, plus the JVF interchange format for injecting real features.
//! - [`connector`]: 2x2 attention pooling with mean-pooled queries and a
//!   SwiGLU projection; forward, analytic backward, and gradient checks.
//! - [`sequence`]: visual token layout with `<im_start>`/`<im_end>`/`<im_col>`
//!   delimiters.
//! - [`budget`]: token/FLOPs/KV-cache accounting for prefill.
//!
//! All operations are pure functions of their inputs and bit-deterministic,
//! so golden files and repeated runs compare exactly.

pub mod budget;
pub mod connector;
pub mod error;
pub mod features;
pub mod imaging;
mod mix;
pub mod numerics;
pub mod sequence;
pub mod tiling;

pub use error::{ConfigError, FormatError};

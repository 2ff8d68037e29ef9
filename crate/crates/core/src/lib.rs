//! Shallow feature extraction for hyperspectral images.
//!
//! The crate covers the whole evaluation chain used to compare feature
//! extractors on a labeled scene: projection learning (unsupervised in
//! [`ufe`], supervised in [`sfe`]), affinity graphs ([`graph`]), random-forest
//! and k-NN classification ([`classify`]), accuracy reporting and raster I/O
//! ([`hsio`]), and a config-driven benchmark runner ([`pipeline`]) that works on
//! ENVI cubes or on synthetic scenes from [`synth`].
//!
//! Matrices follow the `p × n` convention: one column per pixel or sample,
//! one row per band. Pixel `i` of an `r × c` image sits at `row * c + col`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod config;
pub mod error;
pub mod graph;
pub mod hsio;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod sfe;
pub mod synth;
pub mod ufe;

pub use error::{Error, Result};

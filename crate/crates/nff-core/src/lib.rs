//! Synthesis engine for sparse near-field-focused planar antenna arrays.
//!
//! The crate implements a two-stage synthesis: quadrant-symmetric orthogonal
//! matching pursuit pre-selects candidate elements, then a complex group-L1
//! conic program refines their excitations under a mainlobe equality, sidelobe
//! magnitude bounds, and axial magnitude bounds. A conventional full-array L1
//! solve is provided as the comparison baseline, together with metric
//! extraction (sparsity, beamwidth, sidelobe level, focal shift, peak field)
//! and an experiment pipeline with per-stage timing.
//!
//! All lengths are in wavelengths (λ = 1, k = 2π).

pub mod conic;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod omp;
pub mod pipeline;

pub use error::{Result, SynthError};

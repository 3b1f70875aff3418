//! Math core for feed-forward visual geometry estimation.
//!
//! The crate covers, in plain f64 with no learned weights:
//! - a pinhole camera model with quaternion poses and field-of-view
//!   intrinsics ([`camera`]),
//! - robust alignment solvers: per-sequence L1 scale, per-frame robust
//!   scale-shift, and Umeyama similarity ([`align`]),
//! - multi-view training losses including spatial/temporal gradient terms,
//!   confidence weighting, alignment-invariant variants, and a
//!   camera-consistency loss, each with analytic gradients and a
//!   finite-difference verifier ([`loss`]),
//! - reconstruction and pose metrics: voxel downsampling, Chamfer-L1,
//!   F-score, depth Rel/delta, ATE/RPE, field-of-view error, and rank
//!   aggregation ([`metrics`]),
//! - a toy-scale gated cross-attention fusion block whose zero-initialized
//!   gate makes it an exact identity, plus a linear-in-frames compute-cost
//!   model ([`fusion`]),
//! - synthetic scene generation with analytic ray-cast depth and a family of
//!   controlled corruptions for end-to-end checks ([`synth`]),
//! - a sequence file format and a JSON-emitting command-line front end
//!   ([`io`], [`cli`]).
//!
//! Everything downstream of a random seed is deterministic: reductions use
//! fixed-order pairwise summation and all randomness flows through seeded
//! ChaCha generators.

pub mod align;
pub mod camera;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod io;
pub mod json;
pub mod loss;
pub mod metrics;
pub mod sample;
pub mod synth;
pub mod util;

pub use camera::{CameraParams, Intrinsics};
pub use error::{Error, Result};
pub use grid::{Grid, ScalarGrid, ValidMask, VecGrid};
pub use sample::{FrameSample, SequenceSample};

/// Seed used by the command-line tool when neither a flag nor the
/// `GEOMCARVE_SEED` environment variable overrides it.
pub const DEFAULT_SEED: u64 = 2025;

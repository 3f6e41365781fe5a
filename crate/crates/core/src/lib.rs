//! Patch-based spatiotemporal fingerprint presentation-attack detection on
//! laser speckle contrast imaging (LSCI) time series.
//!
//! The crate bundles everything needed to run the benchmark end to end on a
//! single machine:
//!
//! * [`tensor`] / [`nn`] — a small deterministic neural-network engine with
//!   hand-derived backward passes (2D/3D convolution, pooling, LSTM, Adam,
//!   binary cross entropy).
//! * [`arch`] — the five patch classifiers (`BaseN`, `ResN`, `IncpN`,
//!   `Conv3`, `Lstm`) assembled for a given patch geometry.
//! * [`data`] — the LSCI sample model, its binary file format, preprocessing
//!   and a synthetic dynamic-speckle generator.
//! * [`patch`] — ROI cropping, sliding-window patch extraction, the three
//!   per-architecture input views and score aggregation.
//! * [`eval`] — partition planners (3-fold subject-disjoint, leave-one-
//!   attack-out), the training loop and the metric suite
//!   (APCER/BPCER/ACER/BPCER20/AUC).

pub mod arch;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod nn;
pub mod patch;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

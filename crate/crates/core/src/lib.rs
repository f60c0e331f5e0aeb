//! End-to-end 3D in-air sonar road-surface pipeline.
//!
//! The crate covers the full chain from raw 1-bit sensor data to
//! classification metrics:
//!
//! 1. [`signal`] — chirp generation, PDM sigma-delta encode/decode,
//!    matched filtering and envelope detection on per-channel records.
//! 2. [`beamform`] — array geometry, steering delays, delay-and-sum
//!    beamforming over a 91-direction grid, and CFAR-style cleanup of the
//!    resulting direction × range intensity matrices ("energyscapes").
//! 3. [`simulate`] — synthetic road scenes (materials + damages as
//!    parametrized reflector fields) rendered to microphone signals and
//!    PDM recordings, plus dataset synthesis with a JSONL manifest.
//! 4. [`features`] — the vector preprocessing pipeline (mean-scape
//!    subtraction, range max-pooling, flattening, whitened PCA) and the
//!    image-pipeline augmentations (common time shift, random flips,
//!    per-scape normalization).
//! 5. [`ml`] — one-vs-rest logistic regression, decision trees and random
//!    forests, balanced class weights, the RBF-gamma utility and the CNN
//!    uniform-scaling resolver.
//! 6. [`eval`] — time-sync joins, rare-class filtering, stratified fold
//!    plans, weighted F1 / Cohen's kappa, and Youden-J threshold
//!    calibration.
//! 7. [`cli`] — batch subcommands wiring the stages together behind a
//!    reproducible TOML configuration.
//!
//! All randomness flows from a single root seed through
//! [`seed::derive_seed`], and every stage is deterministic given its seed.

pub mod beamform;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
mod ioutil;
pub mod ml;
pub mod seed;
pub mod signal;
pub mod simulate;

pub use error::{Error, Result};

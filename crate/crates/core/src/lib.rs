//! Self-ensembling student/teacher training for unsupervised domain
//! adaptation on 3D point clouds.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: tape-based reverse-mode differentiation and a
//!   finite-difference checker.
//! - [`geometry`]: point clouds, farthest-point sampling, kNN graphs,
//!   Chamfer distance and preprocessing transforms.
//! - [`augment`]: PointMixup sample mixing with Beta-distributed weights.
//! - [`model`]: EdgeConv encoder, classification and segmentation heads,
//!   folding decoder.
//! - [`loss`]: supervised, soft, reconstruction and consistency objectives
//!   and their joint composition.
//! - [`teacher`]: teacher initialisation and exponential moving average.
//! - [`train`]: Adam, cosine schedule, the joint training loop, metrics
//!   and checkpoints.
//! - [`data`]: procedural domain-shifted datasets and the `PCDS` format.
//! - [`verify`]: finite-difference suite over every primitive and the
//!   joint objective.
//! - [`cli`]: the `sen` command-line front end.

pub mod augment;
pub mod autodiff;
pub mod cli;
pub mod data;
mod error;
pub mod rng;
pub mod geometry;
pub mod loss;
pub mod model;
pub mod teacher;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

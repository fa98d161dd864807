//! Uncertainty fusion for selective binary classification.
//!
//! The crate turns a trained classifier head over feature embeddings into
//! calibrated accept/reject decisions. Six per-sample uncertainty signals —
//! three Fisher-information reciprocals, sparse variational GP predictive
//! variance, and two MC-dropout entropies — are z-score normalized, fused
//! with PSO-optimized weights into one scalar, and thresholded. Evaluation
//! covers the four-outcome selective-classification accounting, exhaustive
//! threshold sweeps, FGSM/PGD attacks in embedding space, and GLCM texture
//! statistics.

pub mod attack;
pub mod data;
pub mod error;
pub mod eval;
pub mod fisher;
pub mod fusion;
pub mod gp;
pub mod head;
pub mod mcdropout;
pub mod pso;
pub mod rng;
pub mod texture;

mod linalg;

pub use error::{Error, Result};

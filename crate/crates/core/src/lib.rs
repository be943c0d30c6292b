//! Conformal-prediction shield for automatic modulation classification.
//!
//! The crate synthesizes labeled I/Q frames, trains a small residual 1-D
//! CNN, crafts FGSM/PGD/CW adversarial perturbations at exact
//! perturbation-to-signal power ratios, wraps the classifier in split and
//! K-fold conformal set predictors, and detects attacks per signal segment
//! by combining set-size inefficiency with the Inconsistency Soft-solution
//! Set (ISS).
//!
//! Everything randomized takes an explicit seed, and every artifact writer
//! is deterministic: equal inputs give byte-identical files.

pub mod attacks;
pub mod classifier;
pub mod conformal;
pub mod error;
pub mod io;
pub mod labels;
pub mod seed;
pub mod shield;
pub mod signal;

pub use error::{Error, Result};
pub use labels::{ModulationLabel, NUM_LABELS};

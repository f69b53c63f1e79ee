//! Computer-aided-diagnosis pipeline for 3-D grayscale image volumes.
//!
//! Classifies volumes (plus patient metadata) into five tissue classes and
//! two risk classes: preprocessing, a from-scratch convolutional feature
//! extractor trained with Adam, an SMO-based SVM over fused 7-D features,
//! volume-level voting, grouped cross-validation with exact binomial
//! confidence intervals, and gradient-based explanations. Ships with a
//! deterministic synthetic phantom generator so the whole chain is
//! verifiable end to end without clinical data.

pub mod aggregate;
pub mod canonical;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod neuralnet;
pub mod oracles;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod svm;

pub use error::{CadxError, Result};

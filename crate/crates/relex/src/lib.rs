//! RelEx: model-agnostic explanations for relational (graph) classifiers.
//!
//! Given a black-box node classifier, RelEx explains a prediction by
//! sampling connected perturbations of the node's ego network, fitting a
//! differentiable surrogate to the black box's responses, and learning a
//! sparse edge mask over the surrogate. The crate also ships the
//! surrounding lab equipment: synthetic benchmark graphs with ground-truth
//! motifs, trainable black-box models, baseline explainers, and
//! evaluation metrics.

pub use ndarray;

pub mod autodiff;
pub mod baselines;
pub mod blackbox;
pub mod config;
pub mod error;
pub mod eval;
pub mod explain;
pub mod formats;
pub mod graph;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

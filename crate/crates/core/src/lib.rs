//! Evolutionary symbolic-regression classifiers.
//!
//! Three classifiers share one fit/predict surface:
//!
//! - `GPLearnClf`: one tree-GP population per class, each scored by log loss
//!   against its one-vs-rest target column.
//! - `CartesianClf`: the same one-vs-rest scheme over Cartesian GP genomes
//!   evolved with a (1+λ) strategy.
//! - `ClaSyCo`: one tree population per class evolved cooperatively; a
//!   candidate is scored by the softmax cross-entropy of the team it forms
//!   with the other populations' previous-generation champions.
//!
//! The [`hpo`] module searches over the classifier choice and its
//! hyperparameters with random or TPE sampling.

pub mod cgp;
pub mod classifiers;
pub mod data;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod hpo;
pub mod matrix;
pub mod metrics;
pub mod par;

pub use error::{Error, Result};
pub use matrix::Matrix;

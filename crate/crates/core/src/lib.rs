//! Knowledge distillation for sentence-level translation quality estimation.
//!
//! A small bidirectional-GRU attention regressor (the student) is trained
//! on labels produced by a teacher. Unlabeled source/translation pairs can
//! be pseudo-labelled to enlarge the training set, and noisy pseudo-labels
//! can be dropped using the prediction variance of an ensemble.

pub mod distill;
pub mod error;
pub mod eval;
pub mod corpus;
pub mod manifest;
pub mod model;
pub mod numerics;
pub mod par;
pub mod synthetic_bench;
pub mod teacher;
pub mod trainer;

pub use error::{Error, Result};

//! Incident-report text classification and precursor mining.
//!
//! Three classifiers (a multi-branch CNN, a hierarchical attention network
//! and a TF-IDF + linear SVM) are trained on labeled reports; their
//! interpretability signals are then aggregated into ranked lists of text
//! fragments per outcome category.

pub mod checkpoint;
pub mod cli;
pub mod cnn;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod han;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod rng;
pub mod synthcorpus;
pub mod textprep;
pub mod trainer;
pub mod tfidf_svm;

pub use error::{Error, Result};

//! TF-IDF n-gram features and one-vs-rest linear SVMs.

pub mod svm;
pub mod tfidf;

pub use svm::{
    BinarySvm, Gram, GridSearch, LinearSvmOvR, SvmConfig, c_grid, fit_with_selection, grid_search_c,
    optimal_bias, primal_objective, train_ovr, train_svm_binary,
};
pub use tfidf::{SparseVec, TfidfConfig, TfidfVectorizer, idf};

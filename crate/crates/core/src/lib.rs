//! Spectral shrinkage estimators of the kernel mean embedding.
//!
//! The estimators reweight the sample, `μ = Σ βᵢ k(xᵢ, ·)`, with
//! `β = g_λ(K̄) K̄ 1_n` for a filter function `g_λ` applied to the
//! normalised Gram matrix `K̄ = K/n`.

pub mod dataset;
pub mod density;
pub mod error;
pub mod estimators;
pub mod filters;
pub mod kernels;
pub mod linalg;
pub mod risk;
pub mod selection;
pub mod synthetic;
pub mod theory;

pub use dataset::{load_csv, parse_csv, Dataset, Standardization};
pub use error::{KmseError, Result};
pub use filters::{check_admissibility, residual, scalar_filter, shrinkage_factor, AdmissibilityReport, FilterSpec};
pub use kernels::{gram_matrix, kernel_eval, median_heuristic_bandwidth, normalize_gram, GramMatrix, KernelSpec, NormalizedGram};
pub use linalg::{solve_spd, sym_eigendecompose, EigenDecomposition, SymMatrix};

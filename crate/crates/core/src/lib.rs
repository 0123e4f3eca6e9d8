//! Gaussian-process emulation on sparse grid experimental designs.
//!
//! Sparse grid designs are unions of Cartesian-product lattices built from
//! nested one-dimensional component designs. With a separable covariance,
//! the kriging weights, predictive variance, log-determinant, and
//! closed-form maximum likelihood estimates can all be computed from the
//! small per-dimension covariance matrices, without ever forming the
//! `N x N` covariance matrix. A dense reference implementation is included
//! for cross-checking and for baseline designs.

pub mod bench_harness;
pub mod dense_oracle;
pub mod designs;
pub mod error;
pub mod kernels;
pub mod kron_linalg;
pub mod likelihood;
pub mod sg_predictor;

pub use designs::{
    build_lattice, build_lhs, build_sparse_grid, index_set_j, index_set_p, sample_size,
    smolyak_coefficient, BuiltinSchedule, ComponentSchedule, MultiIndex, SparseGridDesign,
};
pub use error::{Error, Result};
pub use kernels::{matern_eval, KernelShape, Matern, MeanBasis, SeparableKernel, Smoothness};
pub use likelihood::{fit_mle, MleResult};
pub use sg_predictor::{SparseGridSolver, WeightVector};

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

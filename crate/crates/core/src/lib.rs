//! Spectral analysis of kernel and neural embeddings for the two-layer ReLU model
//! `f(x) = (1/√m) Σ_r a_r max(0, w_rᵀ φ(x))`.
//!
//! The crate builds the infinite-width Gram matrix `H(K)∞` for a given embedding φ,
//! decomposes it, and reports how the label vector projects onto its eigenvectors.
//! Those projections drive two quantities:
//!
//! - the convergence predictor `√(Σ_i (1 − ηλ_i)^{2k} (v_iᵀy)²)` for gradient descent, and
//! - the generalization measure `yᵀ H⁻¹ y`.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`data`] | MNIST IDX / CIFAR-10 binary loaders, two-class tasks, half splits |
//! | [`embed`] | kernels, random Fourier features, Nyström features, neural embeddings |
//! | [`gram`] | Gram construction (closed form and Monte Carlo), eigensolvers, spectral measures |
//! | [`align`] | centered kernel alignment and the alignf kernel-weight QP |
//! | [`train`] | the two-layer network and full-batch gradient descent |
//! | [`cli`] | config-driven experiment runner |
//!
//! Heavy loops run on rayon when the `parallel` feature is enabled (the default).
//! Every parallel path splits work into fixed-size pieces whose results do not
//! depend on the thread count, so outputs are bit-identical at 1 or N threads.

pub mod align;
pub mod cli;
pub mod container;
pub mod data;
pub mod embed;
pub mod error;
pub mod exec;
pub mod gram;
pub mod linalg;
pub mod train;

pub use error::{Error, Result};
pub use exec::Exec;

//! Random Fourier features for the Gaussian kernel `exp(−γ‖x − y‖²)`.
//!
//! Single cosine bank with random phase: `z(x) = √(2/D) cos(Wx + b)`, rows of W drawn from
//! `N(0, 2γ I)` (the spectral density of the kernel) and `b ~ U[0, 2π)`. Then
//! `E[z(x)·z(y)] = exp(−γ‖x − y‖²)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct RffMap {
    pub gamma: f64,
    /// D × d frequency matrix.
    pub freqs: Matrix,
    pub phases: Vec<f64>,
}

pub fn build_rff(gamma: f64, dim: usize, input_dim: usize, seed: u64) -> Result<RffMap> {
    if dim == 0 || input_dim == 0 {
        return Err(Error::Size(format!("RFF dimensions D = {dim}, d = {input_dim}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Value(format!("γ = {gamma} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (2.0 * gamma).sqrt()).expect("positive std");
    let freqs = Matrix::from_shape_simple_fn((dim, input_dim), || normal.sample(&mut rng));
    let phases = (0..dim).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    Ok(RffMap { gamma, freqs, phases })
}

impl RffMap {
    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.freqs.ncols()
    }

    /// Unnormalized features `√(2/D) cos(Wx + b)`.
    pub fn raw(&self, x: &[f64]) -> Vec<f64> {
        let scale = (2.0 / self.dim() as f64).sqrt();
        let w = self.freqs.as_slice().expect("standard layout");
        let d = self.input_dim();
        self.phases
            .iter()
            .enumerate()
            .map(|(j, b)| scale * (dot(&w[j * d..(j + 1) * d], x) + b).cos())
            .collect()
    }
}

//! The infinite-width Gram matrix `H(K)∞` of the two-layer ReLU model and its spectrum.
//!
//! For embedded points φ_i, `H_ij = E_w[K(x_i, x_j) 1{wᵀφ_i ≥ 0, wᵀφ_j ≥ 0}]` with
//! `w ~ N(0, I)`. The probability that a Gaussian direction lands in both half-spaces is
//! `(π − θ_ij)/(2π)`, θ_ij being the angle between φ_i and φ_j, which gives the closed form
//! used on the production path. [`gram_monte_carlo`] estimates the expectation directly and
//! serves as its oracle.

pub mod eigen;
pub mod spectral;

use std::f64::consts::PI;

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, max_abs, norm, row_gram, Matrix};

pub use eigen::EigenMethod;
pub use spectral::{
    convergence_curve, convergence_predictor, generalization_measure, projection_profile,
    spectrum, GeneralizationMeasure, ProjectionProfile, Spectrum,
};

const UNIT_ROW_TOL: f64 = 1e-6;
const KERNEL_SYMMETRY_TOL: f64 = 1e-10;
const MC_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GramSource {
    ClosedForm,
    KernelMatrix,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub h: Matrix,
    pub source: GramSource,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.h.diag().sum()
    }
}

/// `K·(π − arccos(clamp(K/√(K_ii K_jj))))/(2π)`; symmetric in its arguments.
#[inline]
fn half_space_entry(k: f64, kii: f64, kjj: f64) -> f64 {
    let cos = (k / (kii * kjj).sqrt()).clamp(-1.0, 1.0);
    k * (PI - cos.acos()) / (2.0 * PI)
}

fn apply_half_space(k: &Matrix, exec: Exec) -> Matrix {
    let n = k.nrows();
    let diag: Vec<f64> = k.diag().to_vec();
    let src = k.as_slice().expect("standard layout");
    let mut h = Matrix::zeros((n, n));
    if n == 0 {
        return h;
    }
    exec.for_each_chunk_mut(h.as_slice_mut().expect("standard layout"), n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            *v = half_space_entry(src[lo * n + hi], diag[lo], diag[hi]);
        }
    });
    h
}

fn check_unit_rows(rows: ArrayView2<f64>) -> Result<()> {
    for (i, r) in rows.outer_iter().enumerate() {
        let v: Vec<f64> = r.to_vec();
        let nr = norm(&v);
        if (nr - 1.0).abs() > UNIT_ROW_TOL {
            return Err(Error::Precondition(format!("row {i} has norm {nr}, expected 1")));
        }
    }
    Ok(())
}

/// Closed-form `H∞` for unit-norm embedded rows.
pub fn gram_from_embedded(rows: ArrayView2<f64>) -> Result<GramMatrix> {
    gram_from_embedded_with(rows, Exec::default())
}

pub fn gram_from_embedded_with(rows: ArrayView2<f64>, exec: Exec) -> Result<GramMatrix> {
    check_unit_rows(rows)?;
    let k = row_gram(rows, exec);
    Ok(GramMatrix {
        h: apply_half_space(&k, exec),
        source: GramSource::ClosedForm,
    })
}

/// `H(K)∞` from an explicit kernel matrix (the infinite-dimensional embedding of K).
pub fn gram_from_kernel_matrix(k: ArrayView2<f64>) -> Result<GramMatrix> {
    gram_from_kernel_matrix_with(k, Exec::default())
}

pub fn gram_from_kernel_matrix_with(k: ArrayView2<f64>, exec: Exec) -> Result<GramMatrix> {
    let (r, c) = k.dim();
    if r != c {
        return Err(Error::Precondition(format!("kernel matrix is {r}×{c}")));
    }
    for i in 0..r {
        // Also rejects NaN.
        if k[[i, i]].is_nan() || k[[i, i]] <= 0.0 {
            return Err(Error::Value(format!("kernel diagonal K[{i},{i}] = {}", k[[i, i]])));
        }
    }
    let scale = max_abs(k).max(1.0);
    for i in 0..r {
        for j in i + 1..r {
            if (k[[i, j]] - k[[j, i]]).abs() > KERNEL_SYMMETRY_TOL * scale {
                return Err(Error::Precondition(format!("kernel matrix asymmetric at ({i},{j})")));
            }
        }
    }
    let k = k.as_standard_layout().into_owned();
    Ok(GramMatrix {
        h: apply_half_space(&k, exec),
        source: GramSource::KernelMatrix,
    })
}

/// Direct estimator: `Ĥ_ij = (φ_i·φ_j)·#{w : wᵀφ_i ≥ 0, wᵀφ_j ≥ 0}/S` over `S` standard
/// Gaussian draws.
///
/// Samples are drawn in fixed chunks, each from its own ChaCha stream keyed by the chunk index,
/// and the integer counts are summed, so the estimate does not depend on the thread count.
pub fn gram_monte_carlo(rows: ArrayView2<f64>, samples: usize, seed: u64) -> Result<GramMatrix> {
    gram_monte_carlo_with(rows, samples, seed, Exec::default())
}

pub fn gram_monte_carlo_with(
    rows: ArrayView2<f64>,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<GramMatrix> {
    if samples == 0 {
        return Err(Error::Value("Monte-Carlo sample count must be at least 1".into()));
    }
    let rows = rows.as_standard_layout();
    let (n, d) = rows.dim();
    let flat = rows.as_slice().expect("standard layout");
    let chunks = samples.div_ceil(MC_CHUNK);

    let partial = exec.map(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let count = MC_CHUNK.min(samples - c * MC_CHUNK);
        let mut counts = vec![0u32; n * n];
        let mut w = vec![0.0; d];
        let mut hit = Vec::with_capacity(n);
        for _ in 0..count {
            for x in w.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            hit.clear();
            for i in 0..n {
                if dot(&w, &flat[i * d..(i + 1) * d]) >= 0.0 {
                    hit.push(i);
                }
            }
            for (a, &i) in hit.iter().enumerate() {
                for &j in &hit[a..] {
                    counts[i * n + j] += 1;
                }
            }
        }
        counts
    });

    let mut total = vec![0u64; n * n];
    for counts in &partial {
        for (t, &c) in total.iter_mut().zip(counts) {
            *t += u64::from(c);
        }
    }
    let k = row_gram(rows.view(), exec);
    let mut h = Matrix::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = k[[i, j]] * total[i * n + j] as f64 / samples as f64;
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }
    Ok(GramMatrix {
        h,
        source: GramSource::MonteCarlo { samples },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(v: &[&[f64]]) -> Matrix {
        Matrix::from_shape_fn((v.len(), v[0].len()), |(i, j)| v[i][j])
    }

    #[test]
    fn closed_form_fixtures() {
        let g = gram_from_embedded(rows(&[&[1.0, 0.0]]).view()).unwrap();
        assert_eq!(g.h[[0, 0]], 0.5);

        let g = gram_from_embedded(rows(&[&[1.0, 0.0], &[0.0, 1.0]]).view()).unwrap();
        assert_eq!(g.h, Matrix::eye(2) * 0.5);

        let c = 0.5f64;
        let g = gram_from_embedded(rows(&[&[1.0, 0.0], &[c, (1.0 - c * c).sqrt()]]).view()).unwrap();
        assert!((g.h[[0, 1]] - 1.0 / 6.0).abs() < 1e-12);

        let g = gram_from_embedded(rows(&[&[1.0, 0.0], &[-1.0, 0.0]]).view()).unwrap();
        assert_eq!(g.h[[0, 1]], 0.0);
    }

    #[test]
    fn closed_form_rejects_non_unit() {
        assert!(matches!(
            gram_from_embedded(rows(&[&[1.0, 1.0]]).view()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn kernel_matrix_fixtures_and_errors() {
        let g = gram_from_kernel_matrix(Matrix::eye(3).view()).unwrap();
        assert_eq!(g.h, Matrix::eye(3) * 0.5);
        let k = rows(&[&[1.0, 0.5], &[0.5, 1.0]]);
        let g = gram_from_kernel_matrix(k.view()).unwrap();
        assert!((g.h[[0, 1]] - 1.0 / 6.0).abs() < 1e-12);
        let bad = rows(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(gram_from_kernel_matrix(bad.view()), Err(Error::Value(_))));
        let asym = rows(&[&[1.0, 0.5], &[0.4, 1.0]]);
        assert!(matches!(
            gram_from_kernel_matrix(asym.view()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn monte_carlo_special_pairs() {
        let s = 200_000;
        let dup = rows(&[&[0.6, 0.8], &[0.6, 0.8]]);
        let g = gram_monte_carlo(dup.view(), s, 3).unwrap();
        assert!((g.h[[0, 1]] - 0.5).abs() <= 4.0 / (s as f64).sqrt());
        let anti = rows(&[&[0.6, 0.8], &[-0.6, -0.8]]);
        let g = gram_monte_carlo(anti.view(), s, 3).unwrap();
        assert_eq!(g.h[[0, 1]], 0.0);
        assert_eq!(g.h, g.h.t());
        assert!(gram_monte_carlo(anti.view(), 0, 3).is_err());
    }

    #[test]
    fn monte_carlo_thread_invariant() {
        let r = rows(&[&[0.6, 0.8, 0.0], &[0.0, 0.6, 0.8], &[1.0, 0.0, 0.0]]);
        let a = gram_monte_carlo_with(r.view(), 20_000, 11, Exec::Sequential).unwrap();
        let b = gram_monte_carlo_with(r.view(), 20_000, 11, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}

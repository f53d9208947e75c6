//! Nyström features for an arbitrary kernel.
//!
//! With landmarks `l_1..l_D` and `K_mm = [k(l_a, l_b)]`, the map is
//! `x ↦ K_mm^{−1/2} [k(x, l_1), …, k(x, l_D)]`, so inner products of mapped points reproduce
//! `K_nm K_mm⁺ K_mn`. Eigenvalues of `K_mm` below `eig_floor · λ_max` are treated as zero.

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kernel::KernelSpec;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gram::eigen::{symmetric_eigen, EigenMethod};
use crate::linalg::{dot, Matrix};

pub const DEFAULT_EIG_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct NystromMap {
    pub kernel: KernelSpec,
    /// D × d landmark rows.
    pub landmarks: Matrix,
    /// D × D symmetric pseudo-inverse square root of `K_mm`.
    pub whitening: Matrix,
    /// Positions of the landmarks in the pool they were drawn from.
    pub landmark_index: Vec<usize>,
}

pub fn build_nystrom(
    kernel: &KernelSpec,
    pool: ArrayView2<f64>,
    dim: usize,
    seed: u64,
    eig_floor: f64,
) -> Result<NystromMap> {
    kernel.validate()?;
    let n = pool.nrows();
    if dim == 0 || dim > n {
        return Err(Error::Size(format!("Nyström dimension {dim} with {n} candidate rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, dim).into_vec();
    idx.sort_unstable();
    let mut landmarks = Matrix::zeros((dim, pool.ncols()));
    for (k, &i) in idx.iter().enumerate() {
        landmarks.row_mut(k).assign(&pool.row(i));
    }
    let kmm = kernel.gram(landmarks.view(), Exec::default());
    let (values, vectors) = symmetric_eigen(kmm.view(), EigenMethod::Auto)?;
    let lam_max = values.first().copied().unwrap_or(0.0);
    let cutoff = eig_floor * lam_max;
    let keep: Vec<usize> = (0..dim).filter(|&i| lam_max > 0.0 && values[i] > cutoff).collect();
    if keep.is_empty() {
        return Err(Error::Degenerate(
            "every landmark kernel eigenvalue is below the floor".into(),
        ));
    }
    // W = V_r diag(λ_r^{-1/2}) V_rᵀ
    let mut scaled = Matrix::zeros((dim, keep.len()));
    let mut basis = Matrix::zeros((dim, keep.len()));
    for (c, &i) in keep.iter().enumerate() {
        let s = values[i].sqrt().recip();
        for r in 0..dim {
            basis[[r, c]] = vectors[[r, i]];
            scaled[[r, c]] = vectors[[r, i]] * s;
        }
    }
    let mut whitening = scaled.dot(&basis.t());
    // Symmetrize exactly.
    for i in 0..dim {
        for j in i + 1..dim {
            let v = 0.5 * (whitening[[i, j]] + whitening[[j, i]]);
            whitening[[i, j]] = v;
            whitening[[j, i]] = v;
        }
    }
    Ok(NystromMap {
        kernel: kernel.clone(),
        landmarks,
        whitening,
        landmark_index: idx,
    })
}

impl NystromMap {
    pub fn dim(&self) -> usize {
        self.landmarks.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.landmarks.ncols()
    }

    /// Kernel evaluations against the landmarks.
    pub fn kernel_row(&self, x: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        let l = self.landmarks.as_slice().expect("standard layout");
        (0..self.dim())
            .map(|j| self.kernel.eval_unchecked(x, &l[j * d..(j + 1) * d]))
            .collect()
    }

    /// Whitened (unnormalized) features.
    pub fn raw(&self, x: &[f64]) -> Vec<f64> {
        let k = self.kernel_row(x);
        let w = self.whitening.as_slice().expect("standard layout");
        let m = self.dim();
        (0..m).map(|i| dot(&w[i * m..(i + 1) * m], &k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> Matrix {
        Matrix::from_shape_fn((6, 4), |(i, j)| ((i * 5 + j * 3) as f64 * 0.37).sin() + if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn single_landmark_formula() {
        let p = pool();
        let k = KernelSpec::Gaussian { gamma: 0.5 };
        let map = build_nystrom(&k, p.view(), 1, 9, DEFAULT_EIG_FLOOR).unwrap();
        let l = map.landmarks.row(0).to_vec();
        let x = p.row(3).to_vec();
        let expect = k.eval(&x, &l).unwrap() / k.eval(&l, &l).unwrap().sqrt();
        assert!((map.raw(&x)[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn size_errors_and_determinism() {
        let p = pool();
        assert!(matches!(
            build_nystrom(&KernelSpec::Linear, p.view(), 7, 0, DEFAULT_EIG_FLOOR),
            Err(Error::Size(_))
        ));
        let a = build_nystrom(&KernelSpec::Linear, p.view(), 3, 5, DEFAULT_EIG_FLOOR).unwrap();
        let b = build_nystrom(&KernelSpec::Linear, p.view(), 3, 5, DEFAULT_EIG_FLOOR).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_kernel() {
        let zero_pool = Matrix::zeros((3, 2));
        assert!(matches!(
            build_nystrom(&KernelSpec::Linear, zero_pool.view(), 2, 0, DEFAULT_EIG_FLOOR),
            Err(Error::Degenerate(_))
        ));
    }
}

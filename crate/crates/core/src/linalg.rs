//! Small dense helpers shared across modules.

use ndarray::{Array2, ArrayView2};

use crate::exec::Exec;

/// Row-major `f64` matrix used throughout the crate.
pub type Matrix = Array2<f64>;

const PAIRWISE_BLOCK: usize = 128;

/// Pairwise (cascade) summation; error grows as O(log n) rather than O(n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = [0.0f64; 4];
        let mut chunks = xs.chunks_exact(4);
        for c in &mut chunks {
            acc[0] += c[0];
            acc[1] += c[1];
            acc[2] += c[2];
            acc[3] += c[3];
        }
        let tail: f64 = chunks.remainder().iter().sum();
        return (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Dot product with eight independent accumulators. Deterministic for a given length.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit Euclidean norm. Returns the original norm; zero vectors are left untouched.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Frobenius inner product `⟨A, B⟩_F` with pairwise summation over per-row partials.
pub fn frobenius(a: ArrayView2<f64>, b: ArrayView2<f64>, exec: Exec) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let partials = exec.map(a.nrows(), |i| {
        let ra = a.row(i);
        let rb = b.row(i);
        match (ra.as_slice(), rb.as_slice()) {
            (Some(x), Some(y)) => {
                let prods: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
                pairwise_sum(&prods)
            }
            _ => {
                let prods: Vec<f64> = ra.iter().zip(rb.iter()).map(|(p, q)| p * q).collect();
                pairwise_sum(&prods)
            }
        }
    });
    pairwise_sum(&partials)
}

/// Largest absolute entry.
pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Symmetric Gram `A Aᵀ` from row dot products; entry `(i, j)` is `dot(a_i, a_j)`, so the
/// result is exactly symmetric.
pub fn row_gram(rows: ArrayView2<f64>, exec: Exec) -> Matrix {
    let n = rows.nrows();
    let rows = rows.as_standard_layout();
    let flat = rows.as_slice().expect("standard layout");
    let d = rows.ncols();
    let mut out = Matrix::zeros((n, n));
    let slice = out.as_slice_mut().expect("standard layout");
    exec.for_each_chunk_mut(slice, n.max(1), |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            *v = dot(&flat[lo * d..(lo + 1) * d], &flat[hi * d..(hi + 1) * d]);
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 49_995_000.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..13).map(|i| i as f64).collect();
        let b = vec![1.0; 13];
        assert_eq!(dot(&a, &b), 78.0);
    }

    #[test]
    fn row_gram_is_exactly_symmetric() {
        let rows = Matrix::from_shape_fn((7, 5), |(i, j)| ((i * 31 + j * 7) as f64).sin());
        let g = row_gram(rows.view(), Exec::Sequential);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(g[[i, j]], g[[j, i]]);
            }
        }
    }
}

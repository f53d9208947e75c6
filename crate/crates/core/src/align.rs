//! Centered kernel-target alignment and alignf: nonnegative base-kernel weights that
//! maximize alignment with the label outer product.
//!
//! With centered bases `K_i^c`, `M_kl = ⟨K_k^c, K_l^c⟩_F` and `a_i = ⟨K_i^c, yyᵀ⟩_F`, the
//! weights are `μ = v/‖v‖` for `v = argmin_{v ≥ 0} vᵀMv − 2vᵀa`. Because centering is an
//! orthogonal projection, `⟨K^c, yyᵀ⟩ = ⟨K^c, (yyᵀ)^c⟩`, so centering the target is optional.

use ndarray::ArrayView2;
use serde::Serialize;

use crate::embed::KernelSpec;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gram::eigen::{symmetric_eigen, EigenMethod};
use crate::linalg::{dot, frobenius, max_abs, pairwise_sum, Matrix};

pub const DEFAULT_QP_TOL: f64 = 1e-10;
pub const DEFAULT_QP_MAX_ITERS: usize = 1_000_000;
pub const DEFAULT_GAUSSIAN_BANK: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

const POWER_ITERS: usize = 500;
const ACTIVE_SET_ITERS: usize = 100;
const SOLVE_FLOOR: f64 = 1e-14;

/// `C K C` with `C = I − 𝟙𝟙ᵀ/n`, computed from row, column and grand means.
pub fn center_kernel(k: ArrayView2<f64>, exec: Exec) -> Matrix {
    let (n, m) = k.dim();
    assert_eq!(n, m, "kernel matrix must be square");
    if n == 0 {
        return Matrix::zeros((0, 0));
    }
    let k = k.as_standard_layout();
    let flat = k.as_slice().expect("standard layout");
    let inv = 1.0 / n as f64;
    let row_mean: Vec<f64> = exec.map(n, |i| pairwise_sum(&flat[i * n..(i + 1) * n]) * inv);
    let col_mean: Vec<f64> = exec.map(n, |j| {
        let col: Vec<f64> = (0..n).map(|i| flat[i * n + j]).collect();
        pairwise_sum(&col) * inv
    });
    let grand = pairwise_sum(&row_mean) * inv;
    let mut out = Matrix::zeros((n, n));
    exec.for_each_chunk_mut(out.as_slice_mut().expect("standard layout"), n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = flat[i * n + j] - (row_mean[i] + col_mean[j]) + grand;
        }
    });
    if n == 1 {
        out[[0, 0]] = 0.0;
    }
    out
}

fn check_pair(k1: ArrayView2<f64>, k2: ArrayView2<f64>) -> Result<()> {
    if k1.dim() != k2.dim() || k1.nrows() != k1.ncols() {
        return Err(Error::Precondition(format!(
            "alignment needs two square matrices of equal size, got {:?} and {:?}",
            k1.dim(),
            k2.dim()
        )));
    }
    Ok(())
}

/// Alignment of two already-centered matrices.
fn alignment_of_centered(c1: ArrayView2<f64>, c2: ArrayView2<f64>, exec: Exec) -> Result<f64> {
    let n11 = frobenius(c1, c1, exec);
    let n22 = frobenius(c2, c2, exec);
    if n11 == 0.0 || n22 == 0.0 {
        return Err(Error::UndefinedAlignment("a kernel matrix centers to zero".into()));
    }
    let ca = frobenius(c1, c2, exec) / (n11 * n22).sqrt();
    Ok(ca.clamp(-1.0, 1.0))
}

/// `⟨K1^c, K2^c⟩_F / √(⟨K1^c, K1^c⟩_F ⟨K2^c, K2^c⟩_F)`
pub fn centered_alignment(k1: ArrayView2<f64>, k2: ArrayView2<f64>, exec: Exec) -> Result<f64> {
    check_pair(k1, k2)?;
    let c1 = center_kernel(k1, exec);
    let c2 = center_kernel(k2, exec);
    alignment_of_centered(c1.view(), c2.view(), exec)
}

/// `yyᵀ`
pub fn label_kernel(y: &[f64]) -> Matrix {
    let n = y.len();
    Matrix::from_shape_fn((n, n), |(i, j)| y[i] * y[j])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QpSolution {
    pub v: Vec<f64>,
    pub objective: f64,
    /// Projected-gradient iterations used.
    pub iterations: usize,
    /// True when the projected-gradient iterate stalled and the active-set refinement finished.
    pub refined: bool,
    /// Largest projected-stationarity violation of the normalized problem actually solved.
    pub residual: f64,
}

/// `vᵀMv − 2vᵀa`
pub fn qp_objective(m: ArrayView2<f64>, a: &[f64], v: &[f64]) -> f64 {
    let mv = mat_vec(m, v);
    dot(v, &mv) - 2.0 * dot(v, a)
}

fn mat_vec(m: ArrayView2<f64>, v: &[f64]) -> Vec<f64> {
    m.outer_iter()
        .map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// For each coordinate: `|g_i|` when `v_i > 0`, `max(0, −g_i)` when `v_i = 0`, with `g = Mv − a`.
pub fn stationarity_residual(m: ArrayView2<f64>, a: &[f64], v: &[f64]) -> f64 {
    let mv = mat_vec(m, v);
    mv.iter()
        .zip(a)
        .zip(v)
        .map(|((mv, a), v)| {
            let g = mv - a;
            if *v > 0.0 {
                g.abs()
            } else {
                (-g).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn power_lambda_max(m: ArrayView2<f64>) -> f64 {
    let p = m.nrows();
    let mut x = vec![1.0 / (p as f64).sqrt(); p];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let y = mat_vec(m, &x);
        let ny = dot(&y, &y).sqrt();
        if ny == 0.0 {
            return 0.0;
        }
        let next = dot(&x, &y);
        x = y.iter().map(|v| v / ny).collect();
        if (next - lambda).abs() <= 1e-14 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Solves `M_FF z = a_F` through a floored eigen pseudo-inverse.
fn solve_free(m: ArrayView2<f64>, a: &[f64], free: &[usize]) -> Result<Vec<f64>> {
    let k = free.len();
    let sub = Matrix::from_shape_fn((k, k), |(i, j)| m[[free[i], free[j]]]);
    let (vals, vecs) = symmetric_eigen(sub.view(), EigenMethod::Jacobi)?;
    let top = vals.first().copied().unwrap_or(0.0);
    let rhs: Vec<f64> = free.iter().map(|&i| a[i]).collect();
    let mut z = vec![0.0; k];
    for (c, &l) in vals.iter().enumerate() {
        if l > SOLVE_FLOOR * top && l > 0.0 {
            let col: Vec<f64> = vecs.column(c).to_vec();
            let coef = dot(&col, &rhs) / l;
            for (zi, vi) in z.iter_mut().zip(&col) {
                *zi += coef * vi;
            }
        }
    }
    Ok(z)
}

/// Lawson–Hanson active-set method in quadratic-program form.
fn active_set(m: ArrayView2<f64>, a: &[f64], tol: f64) -> Result<Vec<f64>> {
    let p = a.len();
    let mut v = vec![0.0; p];
    let mut free = vec![false; p];
    for _ in 0..ACTIVE_SET_ITERS {
        let mv = mat_vec(m, &v);
        let w: Vec<f64> = a.iter().zip(&mv).map(|(a, mv)| a - mv).collect();
        let enter = (0..p)
            .filter(|&i| !free[i] && w[i] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(j) = enter else {
            return Ok(v);
        };
        free[j] = true;
        for _ in 0..p + 1 {
            let idx: Vec<usize> = (0..p).filter(|&i| free[i]).collect();
            let z_free = solve_free(m, a, &idx)?;
            let mut z = vec![0.0; p];
            for (&i, &zi) in idx.iter().zip(&z_free) {
                z[i] = zi;
            }
            if idx.iter().all(|&i| z[i] > 0.0) {
                v = z;
                break;
            }
            let mut alpha = 1.0f64;
            for &i in &idx {
                if z[i] <= 0.0 {
                    alpha = alpha.min(v[i] / (v[i] - z[i]));
                }
            }
            for i in 0..p {
                v[i] += alpha * (z[i] - v[i]);
            }
            for &i in &idx {
                if v[i] <= 0.0 || (z[i] <= 0.0 && v[i] <= f64::EPSILON * alpha.abs()) {
                    v[i] = 0.0;
                    free[i] = false;
                }
            }
        }
    }
    Ok(v)
}

/// `argmin_{v ≥ 0} vᵀMv − 2vᵀa` by projected gradient with step `1/L`, `L = 2λ_max(M)`.
///
/// The problem is solved as `M/λ_max(M)` against `a/‖a‖`, whose minimizer is `v·λ_max/‖a‖`,
/// so `tol` is relative and the iterates do not depend on the overall scale of M or a. If projected gradient has not met `tol` after
/// `max_iters` iterations an active-set refinement is attempted from scratch; failure of
/// both yields [`Error::NonConvergence`].
pub fn solve_nonneg_qp(m: ArrayView2<f64>, a: &[f64], tol: f64, max_iters: usize) -> Result<QpSolution> {
    let p = a.len();
    if m.dim() != (p, p) || p == 0 {
        return Err(Error::Precondition(format!(
            "QP matrix is {:?} for a linear term of length {p}",
            m.dim()
        )));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::Value(format!("QP tolerance {tol} must be nonnegative")));
    }
    if m.iter().chain(a).any(|v| !v.is_finite()) {
        return Err(Error::Value("QP data contains non-finite values".into()));
    }
    let lambda = power_lambda_max(m);
    if lambda <= 0.0 {
        return Err(Error::Degenerate("QP matrix is zero".into()));
    }
    let a_norm = dot(a, a).sqrt();
    if a_norm == 0.0 {
        let v = vec![0.0; p];
        return Ok(QpSolution {
            objective: 0.0,
            residual: stationarity_residual(m, a, &v),
            v,
            iterations: 0,
            refined: false,
        });
    }
    let ms = m.mapv(|x| x / lambda);
    let a_s: Vec<f64> = a.iter().map(|x| x / a_norm).collect();
    let step = 1.0 / (2.0 * power_lambda_max(ms.view()));

    let mut v = vec![0.0; p];
    let mut iterations = 0;
    let mut residual = stationarity_residual(ms.view(), &a_s, &v);
    while residual > tol && iterations < max_iters {
        let g = mat_vec(ms.view(), &v);
        for i in 0..p {
            v[i] = (v[i] - step * 2.0 * (g[i] - a_s[i])).max(0.0);
        }
        iterations += 1;
        residual = stationarity_residual(ms.view(), &a_s, &v);
    }
    let mut refined = false;
    if residual > tol {
        let polished = active_set(ms.view(), &a_s, tol)?;
        let r = stationarity_residual(ms.view(), &a_s, &polished);
        if r > tol {
            return Err(Error::NonConvergence {
                iterations,
                residual: residual.min(r),
            });
        }
        v = polished;
        residual = r;
        refined = true;
    }
    let v: Vec<f64> = v.iter().map(|x| x * a_norm / lambda).collect();
    Ok(QpSolution {
        objective: qp_objective(m, a, &v),
        v,
        iterations,
        refined,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignfResult {
    /// μ* over all supplied bases; excluded bases get weight 0.
    pub weights: Vec<f64>,
    /// `CA(K_i, yyᵀ)`; `None` for excluded bases.
    pub base_alignments: Vec<Option<f64>>,
    /// Bases that center to the zero matrix.
    pub excluded: Vec<usize>,
    /// `CA(K_μ, yyᵀ)`
    pub alignment: f64,
    pub qp: QpSolution,
    #[serde(skip)]
    pub combined: Matrix,
}

/// Learns μ* over `bases` and returns it with `K_μ = Σ μ_i K_i`.
pub fn alignf(bases: &[Matrix], y: &[f64], tol: f64, exec: Exec) -> Result<AlignfResult> {
    alignf_with(bases, y, tol, DEFAULT_QP_MAX_ITERS, exec)
}

pub fn alignf_with(bases: &[Matrix], y: &[f64], tol: f64, max_iters: usize, exec: Exec) -> Result<AlignfResult> {
    if bases.is_empty() {
        return Err(Error::Precondition("alignf needs at least one base kernel".into()));
    }
    let n = y.len();
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Value("labels must be ±1".into()));
    }
    for (i, k) in bases.iter().enumerate() {
        if k.dim() != (n, n) {
            return Err(Error::Precondition(format!(
                "base {i} is {:?}, labels have length {n}",
                k.dim()
            )));
        }
    }
    let target = label_kernel(y);
    let target_c = center_kernel(target.view(), exec);

    let mut centered = Vec::new();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (i, k) in bases.iter().enumerate() {
        let c = center_kernel(k.view(), exec);
        // Exact zero or rounding-level residue of a constant matrix.
        if max_abs(c.view()) <= 1e-14 * max_abs(k.view()) {
            excluded.push(i);
        } else {
            centered.push(c);
            kept.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::Degenerate("every base kernel centers to zero".into()));
    }

    let p = kept.len();
    let mut m = Matrix::zeros((p, p));
    for k in 0..p {
        for l in k..p {
            let v = frobenius(centered[k].view(), centered[l].view(), exec);
            m[[k, l]] = v;
            m[[l, k]] = v;
        }
    }
    let a: Vec<f64> = centered
        .iter()
        .map(|c| frobenius(c.view(), target.view(), exec))
        .collect();

    let mut base_alignments = vec![None; bases.len()];
    for (pos, &i) in kept.iter().enumerate() {
        base_alignments[i] = Some(alignment_of_centered(centered[pos].view(), target_c.view(), exec)?);
    }

    if a.iter().all(|&x| x <= 0.0) {
        return Err(Error::NoAlignedKernel);
    }
    let qp = solve_nonneg_qp(m.view(), &a, tol, max_iters)?;
    let nv = dot(&qp.v, &qp.v).sqrt();
    if nv == 0.0 {
        return Err(Error::NoAlignedKernel);
    }
    let mut weights = vec![0.0; bases.len()];
    for (pos, &i) in kept.iter().enumerate() {
        weights[i] = qp.v[pos] / nv;
    }
    let mut combined = Matrix::zeros((n, n));
    for (w, k) in weights.iter().zip(bases) {
        if *w > 0.0 {
            combined.scaled_add(*w, k);
        }
    }
    let alignment = centered_alignment(combined.view(), target.view(), exec)?;
    Ok(AlignfResult {
        weights,
        base_alignments,
        excluded,
        alignment,
        qp,
        combined,
    })
}

/// Gaussian base kernels for the given bandwidths.
pub fn gaussian_bank(gammas: &[f64]) -> Vec<KernelSpec> {
    gammas.iter().map(|&gamma| KernelSpec::Gaussian { gamma }).collect()
}

/// Runs alignf over kernel specs evaluated on `rows` and returns the learned combination
/// as a kernel, alongside the full result.
pub fn alignf_kernel(
    specs: &[KernelSpec],
    rows: ArrayView2<f64>,
    y: &[f64],
    tol: f64,
    exec: Exec,
) -> Result<(KernelSpec, AlignfResult)> {
    for s in specs {
        s.validate()?;
    }
    let bases: Vec<Matrix> = specs.iter().map(|s| s.gram(rows, exec)).collect();
    let result = alignf(&bases, y, tol, exec)?;
    let (weights, kept): (Vec<f64>, Vec<KernelSpec>) = result
        .weights
        .iter()
        .zip(specs)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, s)| (*w, s.clone()))
        .unzip();
    Ok((KernelSpec::Combination { weights, bases: kept }, result))
}

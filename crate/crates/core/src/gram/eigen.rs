//! Dense symmetric eigensolvers: cyclic Jacobi and Householder tridiagonalization followed by
//! implicit QL. Both return unsorted eigenpairs; [`symmetric_eigen`] sorts and fixes signs.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Sweep limit for the Jacobi method.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Per-eigenvalue iteration limit for QL.
pub const QL_MAX_ITERS: usize = 60;
/// Matrices up to this order go to Jacobi; larger ones to tridiagonal QL.
pub const JACOBI_MAX_N: usize = 128;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Jacobi for small matrices, QL otherwise.
    #[default]
    Auto,
    Jacobi,
    TridiagonalQl,
}

/// Eigenvalues plus eigenvectors stored as rows (`vectors_t[i]` pairs with `values[i]`).
pub(crate) struct RawEigen {
    pub values: Vec<f64>,
    pub vectors_t: Vec<f64>,
}

fn check_square(a: ArrayView2<f64>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::Precondition(format!("matrix is {r}×{c}, not square")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("matrix has non-finite entries".into()));
    }
    Ok(r)
}

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes.
pub(crate) fn jacobi(a: ArrayView2<f64>) -> Result<RawEigen> {
    let n = check_square(a)?;
    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let mut d: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q].abs();
            }
        }
        if off == 0.0 {
            return Ok(RawEigen { values: d, vectors_t: vt });
        }
        let thresh = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    m[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                m[p * n + q] = 0.0;
                let rot = |m: &mut [f64], i: usize, j: usize, k: usize, l: usize| {
                    let g = m[i * n + j];
                    let h = m[k * n + l];
                    m[i * n + j] = g - s * (h + g * tau);
                    m[k * n + l] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rot(&mut m, j, p, j, q);
                }
                for j in p + 1..q {
                    rot(&mut m, p, j, j, q);
                }
                for j in q + 1..n {
                    rot(&mut m, p, j, q, j);
                }
                let (rp, rq) = (p * n, q * n);
                for j in 0..n {
                    let g = vt[rp + j];
                    let h = vt[rq + j];
                    vt[rp + j] = g - s * (h + g * tau);
                    vt[rq + j] = h + s * (g - h * tau);
                }
            }
        }
        for p in 0..n {
            b[p] += z[p];
            d[p] = b[p];
            z[p] = 0.0;
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi did not converge within {JACOBI_MAX_SWEEPS} sweeps"
    )))
}

/// Householder reduction to tridiagonal form followed by implicit-shift QL.
pub(crate) fn tridiagonal_ql(a: ArrayView2<f64>) -> Result<RawEigen> {
    let n = check_square(a)?;
    if n == 0 {
        return Ok(RawEigen {
            values: vec![],
            vectors_t: vec![],
        });
    }
    let mut v: Vec<f64> = a.iter().copied().collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    // QL rotates columns of V; keep them as contiguous rows of Vᵀ.
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            vt[j * n + i] = v[i * n + j];
        }
    }
    tql2(n, &mut vt, &mut d, &mut e)?;
    Ok(RawEigen { values: d, vectors_t: vt })
}

fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for x in &d[..i] {
            scale += x.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for x in &mut d[..i] {
                *x /= scale;
                h += *x * *x;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(n: usize, vt: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITERS {
                    return Err(Error::Numerical(format!(
                        "QL did not converge for eigenvalue {l} within {QL_MAX_ITERS} iterations"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.split_at_mut((i + 1) * n);
                    let ri = &mut lo[i * n..];
                    let ri1 = &mut hi[..n];
                    for k in 0..n {
                        let hk = ri1[k];
                        ri1[k] = s * ri[k] + c * hk;
                        ri[k] = c * ri[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Sorted eigen-decomposition: values descending, eigenvectors as matrix columns, each
/// column's largest-magnitude entry positive (first such index on ties).
pub fn symmetric_eigen(a: ArrayView2<f64>, method: EigenMethod) -> Result<(Vec<f64>, Matrix)> {
    let n = check_square(a)?;
    let raw = match method {
        EigenMethod::Jacobi => jacobi(a)?,
        EigenMethod::TridiagonalQl => tridiagonal_ql(a)?,
        EigenMethod::Auto if n <= JACOBI_MAX_N => jacobi(a)?,
        EigenMethod::Auto => tridiagonal_ql(a)?,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw.values[j].total_cmp(&raw.values[i]).then(i.cmp(&j)));

    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        values.push(raw.values[k]);
        let src = &raw.vectors_t[k * n..(k + 1) * n];
        let mut best = 0;
        for (i, v) in src.iter().enumerate() {
            if v.abs() > src[best].abs() {
                best = i;
            }
        }
        let sign = if src[best] < 0.0 { -1.0 } else { 1.0 };
        for (i, v) in src.iter().enumerate() {
            vectors[[i, col]] = sign * v;
        }
    }
    Ok((values, vectors))
}

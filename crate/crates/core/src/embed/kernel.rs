//! Closed-form kernels: linear, Gaussian, arc-cosine of any order, and nonnegative combinations.

use std::f64::consts::PI;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, Matrix};

const WEIGHT_NORM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    /// `exp(−γ‖x − y‖²)`
    Gaussian { gamma: f64 },
    /// `(1/π) ‖x‖ⁿ ‖y‖ⁿ Jₙ(θ)`
    ArcCosine { order: u32 },
    /// `Σ μ_i K_i`, with μ nonnegative and of unit Euclidean norm.
    Combination {
        weights: Vec<f64>,
        bases: Vec<KernelSpec>,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear | KernelSpec::ArcCosine { .. } => Ok(()),
            KernelSpec::Gaussian { gamma } => {
                if gamma.is_finite() && *gamma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Value(format!("Gaussian bandwidth γ = {gamma} must be positive")))
                }
            }
            KernelSpec::Combination { weights, bases } => {
                if weights.is_empty() || weights.len() != bases.len() {
                    return Err(Error::Value(format!(
                        "{} weights for {} base kernels",
                        weights.len(),
                        bases.len()
                    )));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::Value("combination weights must be nonnegative".into()));
                }
                let n2: f64 = weights.iter().map(|w| w * w).sum();
                if (n2.sqrt() - 1.0).abs() > WEIGHT_NORM_TOL {
                    return Err(Error::Value(format!(
                        "combination weights have norm {}, expected 1",
                        n2.sqrt()
                    )));
                }
                bases.iter().try_for_each(KernelSpec::validate)
            }
        }
    }

    /// Kernel value with input checks.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Precondition(format!(
                "kernel inputs of length {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Value("non-finite kernel input".into()));
        }
        if self.needs_nonzero() && (dot(x, x) == 0.0 || dot(y, y) == 0.0) {
            return Err(Error::Value("arc-cosine kernel of a zero vector".into()));
        }
        Ok(self.eval_unchecked(x, y))
    }

    fn needs_nonzero(&self) -> bool {
        match self {
            KernelSpec::ArcCosine { .. } => true,
            KernelSpec::Combination { bases, .. } => bases.iter().any(KernelSpec::needs_nonzero),
            _ => false,
        }
    }

    /// Kernel value assuming finite, equal-length, nonzero inputs.
    ///
    /// Symmetric bit-for-bit: every term is built from `x·y`, `x·x`, `y·y`, or `‖x − y‖²`,
    /// each of which is invariant under swapping the arguments.
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => symmetric_dot(x, y),
            KernelSpec::Gaussian { gamma } => (-gamma * squared_distance(x, y)).exp(),
            KernelSpec::ArcCosine { order } => {
                let (xx, yy) = (dot(x, x), dot(y, y));
                let (lo, hi) = if xx <= yy { (xx, yy) } else { (yy, xx) };
                arc_cosine_from_products(*order, symmetric_dot(x, y), lo, hi)
            }
            KernelSpec::Combination { weights, bases } => weights
                .iter()
                .zip(bases)
                .map(|(w, k)| w * k.eval_unchecked(x, y))
                .sum(),
        }
    }

    /// `K[i, j] = k(a_i, b_j)`.
    pub fn matrix(&self, a: ArrayView2<f64>, b: ArrayView2<f64>, exec: Exec) -> Matrix {
        let a = a.as_standard_layout();
        let b = b.as_standard_layout();
        let (na, nb, d) = (a.nrows(), b.nrows(), a.ncols());
        let fa = a.as_slice().expect("standard layout");
        let fb = b.as_slice().expect("standard layout");
        let mut out = Matrix::zeros((na, nb));
        if nb == 0 {
            return out;
        }
        exec.for_each_chunk_mut(out.as_slice_mut().expect("standard layout"), nb, |i, row| {
            let x = &fa[i * d..(i + 1) * d];
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.eval_unchecked(x, &fb[j * d..(j + 1) * d]);
            }
        });
        out
    }

    /// Symmetric kernel matrix over the rows of `a`; `K[i, j]` and `K[j, i]` are the same bits.
    pub fn gram(&self, a: ArrayView2<f64>, exec: Exec) -> Matrix {
        let a = a.as_standard_layout();
        let (n, d) = a.dim();
        let fa = a.as_slice().expect("standard layout");
        let mut out = Matrix::zeros((n, n));
        if n == 0 {
            return out;
        }
        exec.for_each_chunk_mut(out.as_slice_mut().expect("standard layout"), n, |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                *v = self.eval_unchecked(&fa[lo * d..(lo + 1) * d], &fa[hi * d..(hi + 1) * d]);
            }
        });
        out
    }
}

/// Dot product that is bit-identical under argument swap (the 8-lane [`dot`] already is,
/// since each lane multiplies the same pair).
#[inline]
fn symmetric_dot(x: &[f64], y: &[f64]) -> f64 {
    dot(x, y)
}

#[inline]
fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let cx = x.chunks_exact(4);
    let cy = y.chunks_exact(4);
    let (rx, ry) = (cx.remainder(), cy.remainder());
    for (a, b) in cx.zip(cy) {
        for k in 0..4 {
            let t = a[k] - b[k];
            acc[k] += t * t;
        }
    }
    let tail: f64 = rx.iter().zip(ry).map(|(a, b)| (a - b) * (a - b)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Arc-cosine kernel from `x·y`, `‖x‖²`, `‖y‖²`; the cosine is clamped to [−1, 1].
pub fn arc_cosine_from_products(order: u32, xy: f64, xx: f64, yy: f64) -> f64 {
    let nx = xx.sqrt();
    let ny = yy.sqrt();
    let cos = (xy / (nx * ny)).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let scale = (nx * ny).powi(order as i32);
    scale * arc_cosine_j(order, theta) / PI
}

/// The angular factor `Jₙ(θ) = (−1)ⁿ (sin θ)^{2n+1} ((1/sin θ) ∂/∂θ)ⁿ ((π − θ)/sin θ)`.
///
/// Writing the n-th derivative term as `(Aₙ(c)(π − θ) + Bₙ(c) sin θ) / sin^{2n+1} θ` with
/// `c = cos θ` gives polynomial recurrences
/// `Aₙ₊₁ = −(1 − c²)Aₙ' − (2n + 1)c Aₙ` and `Bₙ₊₁ = −Aₙ − (1 − c²)Bₙ' − 2n c Bₙ`,
/// so `Jₙ = (−1)ⁿ (Aₙ(c)(π − θ) + Bₙ(c) sin θ)` with no division by `sin θ`.
pub fn arc_cosine_j(order: u32, theta: f64) -> f64 {
    match order {
        0 => PI - theta,
        1 => theta.sin() + (PI - theta) * theta.cos(),
        _ => {
            let (a, b) = j_polynomials(order);
            let c = theta.cos();
            let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * (horner(&a, c) * (PI - theta) + horner(&b, c) * theta.sin())
        }
    }
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_derivative(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect()
}

/// `(1 − c²) · p`
fn times_one_minus_c2(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 2];
    for (k, &c) in p.iter().enumerate() {
        out[k] += c;
        out[k + 2] -= c;
    }
    out
}

fn times_c(p: &[f64], s: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (k, &c) in p.iter().enumerate() {
        out[k + 1] += s * c;
    }
    out
}

fn add_scaled(acc: &mut Vec<f64>, p: &[f64], s: f64) {
    if acc.len() < p.len() {
        acc.resize(p.len(), 0.0);
    }
    for (a, &c) in acc.iter_mut().zip(p) {
        *a += s * c;
    }
}

fn j_polynomials(order: u32) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![1.0];
    let mut b: Vec<f64> = vec![0.0];
    for n in 0..order {
        let k = f64::from(2 * n + 1);
        let mut na = Vec::new();
        add_scaled(&mut na, &times_one_minus_c2(&poly_derivative(&a)), -1.0);
        add_scaled(&mut na, &times_c(&a, k), -1.0);
        let mut nb = Vec::new();
        add_scaled(&mut nb, &a, -1.0);
        add_scaled(&mut nb, &times_one_minus_c2(&poly_derivative(&b)), -1.0);
        add_scaled(&mut nb, &times_c(&b, f64::from(2 * n)), -1.0);
        a = na;
        b = nb;
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_pair_with_dot(c: f64) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0, 0.0, 0.0], vec![c, (1.0 - c * c).sqrt(), 0.0])
    }

    #[test]
    fn gaussian_fixture() {
        let (x, y) = unit_pair_with_dot(0.5);
        let k = KernelSpec::Gaussian { gamma: 1.0 }.eval(&x, &y).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-12);
        assert!((k - 0.3678794).abs() < 1e-7);
    }

    #[test]
    fn arc_cosine_fixtures() {
        let spec = KernelSpec::ArcCosine { order: 0 };
        let (x, y) = unit_pair_with_dot(0.5);
        assert!((spec.eval(&x, &y).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((spec.eval(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(spec.eval(&x, &[0.0; 3]), Err(Error::Value(_))));
        assert!(matches!(
            KernelSpec::Linear.eval(&[f64::NAN], &[1.0]),
            Err(Error::Value(_))
        ));
    }

    #[test]
    fn j_recurrence_matches_closed_forms() {
        for i in 0..50 {
            let t = PI * i as f64 / 49.0;
            let j2 = 3.0 * t.sin() * t.cos() + (PI - t) * (1.0 + 2.0 * t.cos().powi(2));
            assert!((arc_cosine_j(2, t) - j2).abs() < 1e-12);
            let (a, b) = j_polynomials(1);
            let j1 = -(horner(&a, t.cos()) * (PI - t) + horner(&b, t.cos()) * t.sin());
            assert!((j1 - arc_cosine_j(1, t)).abs() < 1e-12);
        }
        // Jₙ(0) = π (2n − 1)!!, so k_n(x, x) = ‖x‖^{2n} (2n − 1)!!.
        assert!((arc_cosine_j(3, 0.0) - 15.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn combination_validation() {
        let ok = KernelSpec::Combination {
            weights: vec![0.6, 0.8],
            bases: vec![KernelSpec::Linear, KernelSpec::Gaussian { gamma: 1.0 }],
        };
        ok.validate().unwrap();
        let bad = KernelSpec::Combination {
            weights: vec![0.5, 0.5],
            bases: vec![KernelSpec::Linear, KernelSpec::Linear],
        };
        assert!(bad.validate().is_err());
        assert!(KernelSpec::Gaussian { gamma: 0.0 }.validate().is_err());
    }

    fn specs() -> Vec<KernelSpec> {
        vec![
            KernelSpec::Linear,
            KernelSpec::Gaussian { gamma: 0.7 },
            KernelSpec::ArcCosine { order: 0 },
            KernelSpec::ArcCosine { order: 1 },
            KernelSpec::ArcCosine { order: 2 },
            KernelSpec::Combination {
                weights: vec![0.6, 0.8],
                bases: vec![KernelSpec::Gaussian { gamma: 2.0 }, KernelSpec::ArcCosine { order: 0 }],
            },
        ]
    }

    proptest! {
        #[test]
        fn symmetric_exactly(x in prop::collection::vec(-3.0f64..3.0, 11), y in prop::collection::vec(-3.0f64..3.0, 11)) {
            prop_assume!(dot(&x, &x) > 1e-6 && dot(&y, &y) > 1e-6);
            for s in specs() {
                prop_assert_eq!(s.eval(&x, &y).unwrap(), s.eval(&y, &x).unwrap());
            }
        }

        #[test]
        fn unit_inputs_in_unit_interval(x in prop::collection::vec(-1.0f64..1.0, 6), y in prop::collection::vec(-1.0f64..1.0, 6)) {
            let (nx, ny) = (dot(&x, &x).sqrt(), dot(&y, &y).sqrt());
            prop_assume!(nx > 1e-3 && ny > 1e-3);
            let x: Vec<f64> = x.iter().map(|v| v / nx).collect();
            let y: Vec<f64> = y.iter().map(|v| v / ny).collect();
            for s in [KernelSpec::Gaussian { gamma: 1.3 }, KernelSpec::ArcCosine { order: 0 }] {
                let k = s.eval(&x, &y).unwrap();
                prop_assert!((0.0..=1.0).contains(&k));
                prop_assert!((s.eval(&x, &x).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
}

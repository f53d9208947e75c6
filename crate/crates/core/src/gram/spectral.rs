//! Spectrum of `H(K)∞` and the quantities read off it: label projections, the
//! gradient-descent convergence predictor, and the generalization measure `yᵀH⁺y`.

use ndarray::ArrayView2;
use serde::Serialize;

use super::eigen::{symmetric_eigen, EigenMethod};
use super::GramMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, pairwise_sum, Matrix};

const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues in descending order; column `i` of `vectors` pairs with `values[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl Spectrum {
    pub fn from_matrix(h: ArrayView2<f64>, method: EigenMethod) -> Result<Self> {
        let (r, c) = h.dim();
        if r != c {
            return Err(Error::Precondition(format!("matrix is {r}×{c}")));
        }
        let scale = max_abs(h).max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in i + 1..r {
                if (h[[i, j]] - h[[j, i]]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Precondition(format!("matrix asymmetric at ({i},{j})")));
                }
            }
        }
        let (values, vectors) = symmetric_eigen(h, method)?;
        Ok(Spectrum { values, vectors })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// `(v_iᵀ y)` for every eigenvector.
    pub fn label_projections(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n() {
            return Err(Error::Precondition(format!(
                "label vector has length {}, spectrum has order {}",
                y.len(),
                self.n()
            )));
        }
        let vt = self.vectors.t().as_standard_layout().into_owned();
        let flat = vt.as_slice().expect("standard layout");
        let n = self.n();
        Ok((0..n).map(|i| dot(&flat[i * n..(i + 1) * n], y)).collect())
    }
}

/// Eigendecomposition with the default solver choice.
pub fn spectrum(h: &GramMatrix) -> Result<Spectrum> {
    Spectrum::from_matrix(h.h.view(), EigenMethod::Auto)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionProfile {
    /// `p_i = (v_iᵀy)² / Σ_j (v_jᵀy)²`
    pub projections: Vec<f64>,
    /// `f_i = Σ_{j ≤ i} p_j`
    pub cumulative: Vec<f64>,
}

impl ProjectionProfile {
    /// Cumulative projection at `index`, clamped to the last entry.
    pub fn cumulative_at(&self, index: usize) -> f64 {
        let i = index.min(self.cumulative.len().saturating_sub(1));
        self.cumulative[i]
    }
}

pub fn projection_profile(spec: &Spectrum, y: &[f64]) -> Result<ProjectionProfile> {
    let proj = spec.label_projections(y)?;
    let sq: Vec<f64> = proj.iter().map(|p| p * p).collect();
    let total = pairwise_sum(&sq);
    if total == 0.0 {
        return Err(Error::Value("label vector is zero".into()));
    }
    let projections: Vec<f64> = sq.iter().map(|s| s / total).collect();
    let mut cumulative = Vec::with_capacity(projections.len());
    let mut acc = 0.0;
    for p in &projections {
        acc += p;
        cumulative.push(acc);
    }
    Ok(ProjectionProfile {
        projections,
        cumulative,
    })
}

fn check_rate(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(Error::Value(format!("learning rate η = {eta} must be positive")))
    }
}

/// `√(Σ_i (1 − ηλ_i)^{2k} (v_iᵀy)²)`
pub fn convergence_predictor(spec: &Spectrum, y: &[f64], eta: f64, steps: u64) -> Result<f64> {
    check_rate(eta)?;
    let proj = spec.label_projections(y)?;
    let terms: Vec<f64> = spec
        .values
        .iter()
        .zip(&proj)
        .map(|(&l, &p)| decay(1.0 - eta * l, steps) * p * p)
        .collect();
    Ok(pairwise_sum(&terms).sqrt())
}

/// The predictor at every step `0..=steps`.
pub fn convergence_curve(spec: &Spectrum, y: &[f64], eta: f64, steps: u64) -> Result<Vec<f64>> {
    check_rate(eta)?;
    let proj = spec.label_projections(y)?;
    let factors: Vec<f64> = spec.values.iter().map(|&l| (1.0 - eta * l).powi(2)).collect();
    let mut weights: Vec<f64> = proj.iter().map(|p| p * p).collect();
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(pairwise_sum(&weights).sqrt());
    for _ in 0..steps {
        for (w, f) in weights.iter_mut().zip(&factors) {
            *w *= f;
        }
        out.push(pairwise_sum(&weights).sqrt());
    }
    Ok(out)
}

/// `q^{2k}` by repeated squaring.
fn decay(q: f64, k: u64) -> f64 {
    let mut base = q * q;
    let mut e = k;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneralizationMeasure {
    /// `Σ_{retained i} (v_iᵀy)² / λ_i`
    pub value: f64,
    /// Eigenvalues treated as zero (below `floor · λ_max`).
    pub dropped: usize,
    pub retained: usize,
}

/// `yᵀ H⁺ y` over a precomputed spectrum.
pub fn generalization_measure(spec: &Spectrum, y: &[f64], pinv_floor: f64) -> Result<GeneralizationMeasure> {
    let proj = spec.label_projections(y)?;
    let lam_max = spec.lambda_max();
    let cutoff = pinv_floor * lam_max;
    let mut terms = Vec::with_capacity(proj.len());
    let mut dropped = 0;
    for (&l, &p) in spec.values.iter().zip(&proj) {
        if lam_max > 0.0 && l > cutoff && l > 0.0 {
            terms.push(p * p / l);
        } else {
            dropped += 1;
        }
    }
    if terms.is_empty() {
        return Err(Error::Degenerate(format!(
            "all {} eigenvalues fall below the pseudo-inverse floor",
            spec.n()
        )));
    }
    Ok(GeneralizationMeasure {
        value: pairwise_sum(&terms),
        dropped,
        retained: terms.len(),
    })
}

impl GramMatrix {
    pub fn spectrum(&self) -> Result<Spectrum> {
        spectrum(self)
    }

    pub fn generalization_measure(&self, y: &[f64], pinv_floor: f64) -> Result<GeneralizationMeasure> {
        generalization_measure(&self.spectrum()?, y, pinv_floor)
    }
}
